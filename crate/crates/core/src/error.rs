use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("bilinear form is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("form is not positive definite")]
    NotPositiveDefinite,

    #[error("form is singular")]
    Singular,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// Argument outside the region where an operation is defined, e.g. a power
    /// series evaluated outside its disk of convergence.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point {point:?} is not in the chart interior")]
    OutsideChart { point: Vec<f64> },

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("invalid loop: {0}")]
    InvalidLoop(String),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("invalid family parameter: {0}")]
    FamilyParameter(String),

    #[error("unknown subgroup `{id}` for ambient dimension {dim}")]
    UnknownSubgroup { id: String, dim: usize },

    #[error("unsupported ambient dimension {0} (supported: 2, 3, 4)")]
    UnsupportedDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("manifest invalid:\n  {}", .0.join("\n  "))]
    Manifest(Vec<String>),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
