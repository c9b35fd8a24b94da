//! Default tolerances and sizes in one place.
//!
//! Calibration runs (release build, shipped manifests, k = 2):
//!
//! * Richardson error estimates of catalog transports stay below 1e-15 and
//!   `SO` defects below 1e-13, so noise in the sampled logs sits far below
//!   `GAP_THRESHOLD = 1e-4`. Genuine holonomy directions of the small loops
//!   are of order 1e-3 and up. Lowering `STEPS` means revisiting the threshold.
//! * Planted-conjugator recovery in `SO(4)` finds every planted class within
//!   `RESTARTS` starts; `CLASSIFY_TOL` is far above the residuals reached.
//! * `COMPATIBILITY_TOL` flags connections worse than finite differencing of
//!   the metric would explain.

pub use crate::holonomy::FRAME_TOL;
pub use crate::linalg::SYMMETRY_TOL;
pub use crate::subgroup::{DEFAULT_RESTARTS as RESTARTS, DEFAULT_TOL as CLASSIFY_TOL, MAX_DESCENT_ITERS};
pub use crate::transport::MIN_STEPS;

/// RK4 steps per unit parameter length.
pub const STEPS: usize = 2048;
pub const GAP_THRESHOLD: f64 = 1e-4;
pub const NOISE_FLOOR: f64 = 1e-9;
pub const CLOSURE_PASSES: usize = 1;
pub const MAX_CLOSURE_PASSES: usize = 3;
/// Transports farther than this from `I` (spectral norm) are not logged.
pub const LOG_RADIUS: f64 = 0.9;
pub const GENERATOR_SCALE: f64 = 0.01;
/// Grid points per axis for grid-sup distances.
pub const DISTANCE_GRID: usize = 21;
pub const COMPATIBILITY_TOL: f64 = 1e-8;
pub const SEED: u64 = 0;
/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "HOLONOMY_LAB_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "holonomy-out";
