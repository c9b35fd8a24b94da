//! Holonomy algebra estimation at a basepoint, and its classification up to
//! conjugation against the subgroup catalog.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{Error, Result};
use crate::geometry::{ChartDomain, ConnectionField};
use crate::linalg::{commutator, orthonormalize, principal_log, skew_part, spectral_norm, BilinearForm, Matrix};
use crate::subgroup::{conjugacy_search, SubgroupSpec};
use crate::transport::{loop_catalog, parallel_transport, square_loop, LoopCatalogSpec, TransportResult};

/// Accepted deviation of `FᵀMF` from the identity for a sampling frame.
pub const FRAME_TOL: f64 = 1e-10;

const LOG_TOL: f64 = 1e-14;

/// Transports of a loop catalog, also expressed in an orthonormal frame.
#[derive(Debug, Clone)]
pub struct HolonomySample {
    pub labels: Vec<String>,
    /// Transports in chart coordinates.
    pub transports: Vec<TransportResult>,
    /// `F⁻¹ P F` for every transport `P`; these lie in `SO(l)`.
    pub framed: Vec<Matrix>,
    pub basepoint: Vec<f64>,
    pub frame: Matrix,
    /// Shrunk or rejected loops from the catalog.
    pub catalog_report: Vec<String>,
}

/// Checks `FᵀMF = I` within [`FRAME_TOL`] and `det F > 0`.
pub fn check_frame(frame: &Matrix, metric: &BilinearForm) -> Result<()> {
    if frame.nrows() != metric.dim() || frame.ncols() != metric.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            found: frame.nrows(),
        });
    }
    let l = metric.dim();
    let defect = (frame.transpose() * metric.matrix() * frame - Matrix::identity(l, l)).amax();
    if defect > FRAME_TOL {
        return Err(Error::InvalidFrame(format!("not orthonormal (defect {defect:.3e})")));
    }
    if frame.determinant() <= 0.0 {
        return Err(Error::InvalidFrame("negatively oriented".into()));
    }
    Ok(())
}

/// Transports every loop of the catalog based at `x` and expresses the results
/// in `frame`. Loops are transported in parallel.
pub fn sample_holonomy(
    conn: &ConnectionField,
    chart: &ChartDomain,
    x: &[f64],
    base_metric: &BilinearForm,
    frame: &Matrix,
    spec: &LoopCatalogSpec,
    steps: usize,
) -> Result<HolonomySample> {
    check_frame(frame, base_metric)?;
    let catalog = loop_catalog(x, spec, chart)?;
    let frame_inv = frame.clone().try_inverse().ok_or(Error::Singular)?;
    let transports = catalog
        .loops
        .par_iter()
        .map(|path| parallel_transport(conn, path, chart, base_metric, steps))
        .collect::<Result<Vec<_>>>()?;
    let framed = transports.iter().map(|t| &frame_inv * &t.matrix * frame).collect();
    Ok(HolonomySample {
        labels: catalog.loops.iter().map(|l| l.label.clone()).collect(),
        transports,
        framed,
        basepoint: x.to_vec(),
        frame: frame.clone(),
        catalog_report: catalog.report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallLoopGenerator {
    pub plane: (usize, usize),
    /// `log(F⁻¹ P_□ F) / ε²`.
    pub generator: Matrix,
}

/// For each coordinate plane `(i, j)`, transports the counter-clockwise square
/// of side `eps` with a corner at `x` and returns `log P / ε²` in the frame.
///
/// With the sign conventions of this crate the result approximates
/// `−F⁻¹ F_ij F` to first order in `eps`.
pub fn small_loop_generators(
    conn: &ConnectionField,
    chart: &ChartDomain,
    x: &[f64],
    base_metric: &BilinearForm,
    frame: &Matrix,
    eps: f64,
    steps: usize,
) -> Result<Vec<SmallLoopGenerator>> {
    check_frame(frame, base_metric)?;
    let frame_inv = frame.clone().try_inverse().ok_or(Error::Singular)?;
    let n = x.len();
    let planes: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    planes
        .par_iter()
        .map(|&(i, j)| {
            let path = square_loop(x, i, j, eps, format!("generator-{i}-{j}"))?;
            let p = parallel_transport(conn, &path, chart, base_metric, steps)?;
            let framed = &frame_inv * &p.matrix * frame;
            let log = principal_log(&framed, LOG_TOL)?;
            Ok(SmallLoopGenerator {
                plane: (i, j),
                generator: log / (eps * eps),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    /// Directions with singular value below `gap_threshold · σ_max` are discarded.
    pub gap_threshold: f64,
    /// Absolute singular-value floor; nothing below it counts as a direction.
    pub noise_floor: f64,
    /// Number of Lie-bracket closure passes (1 to 3).
    pub closure_passes: usize,
    /// Only transports with `‖P − I‖₂` below this radius contribute a log.
    pub log_radius: f64,
    /// Side of the squares used for curvature generators.
    pub generator_scale: f64,
    /// Grid points per axis for the C⁰/C¹ distances.
    pub distance_grid: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            gap_threshold: config::GAP_THRESHOLD,
            noise_floor: config::NOISE_FLOOR,
            closure_passes: config::CLOSURE_PASSES,
            log_radius: config::LOG_RADIUS,
            generator_scale: config::GENERATOR_SCALE,
            distance_grid: config::DISTANCE_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraEstimate {
    /// Frobenius-orthonormal skew matrices.
    pub basis: Vec<Matrix>,
    pub dim: usize,
    /// Smallest kept over largest discarded singular value (∞ if none discarded).
    pub spectral_gap: f64,
    /// Discarded singular-value energy relative to the largest singular value.
    pub residual: f64,
    pub singular_values: Vec<f64>,
    /// Largest symmetric part among the collected logs, before skew projection.
    pub max_symmetric_defect: f64,
    /// Set when no transport or generator was usable.
    pub empty_warning: bool,
}

impl AlgebraEstimate {
    pub fn ambient_dim(&self) -> Option<usize> {
        self.basis.first().map(|b| b.nrows())
    }
}

struct Decomposition {
    singular_values: Vec<f64>,
    directions: Vec<Matrix>,
}

fn decompose(items: &[Matrix]) -> Decomposition {
    let l = items[0].nrows();
    let stacked = Matrix::from_fn(items.len(), l * l, |r, c| items[r][c]);
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Decomposition {
        singular_values: order.iter().map(|&i| svd.singular_values[i]).collect(),
        directions: order
            .iter()
            .map(|&i| Matrix::from_iterator(l, l, v_t.row(i).iter().copied()))
            .collect(),
    }
}

fn kept_count(sv: &[f64], config: &EstimationConfig) -> usize {
    let top = sv.first().copied().unwrap_or(0.0);
    sv.iter()
        .take_while(|&&s| s > config.gap_threshold * top && s > config.noise_floor)
        .count()
}

/// Span of the logs of near-identity transports and the curvature generators,
/// closed under brackets for `closure_passes` passes, with directions chosen
/// by a singular-value cutoff.
pub fn estimate_algebra(sample: &HolonomySample, generators: &[SmallLoopGenerator], config: &EstimationConfig) -> Result<AlgebraEstimate> {
    let mut items: Vec<Matrix> = Vec::new();
    let mut max_symmetric_defect: f64 = 0.0;
    for p in &sample.framed {
        let l = p.nrows();
        if spectral_norm(&(p - Matrix::identity(l, l))) >= config.log_radius {
            continue;
        }
        let log = principal_log(p, LOG_TOL)?;
        max_symmetric_defect = max_symmetric_defect.max(((&log + log.transpose()) * 0.5).amax());
        items.push(skew_part(&log));
    }
    for g in generators {
        max_symmetric_defect =
            max_symmetric_defect.max(((&g.generator + g.generator.transpose()) * 0.5).amax());
        items.push(skew_part(&g.generator));
    }
    if items.is_empty() {
        return Ok(AlgebraEstimate {
            basis: Vec::new(),
            dim: 0,
            spectral_gap: f64::INFINITY,
            residual: 0.0,
            singular_values: Vec::new(),
            max_symmetric_defect,
            empty_warning: true,
        });
    }

    let mut dec = decompose(&items);
    let mut kept = kept_count(&dec.singular_values, config);
    for _ in 0..config.closure_passes.clamp(1, config::MAX_CLOSURE_PASSES) {
        if kept < 2 {
            break;
        }
        let top = dec.singular_values[0];
        let mut all = items.clone();
        for a in 0..kept {
            for b in (a + 1)..kept {
                all.push(commutator(&dec.directions[a], &dec.directions[b]) * top);
            }
        }
        let next = decompose(&all);
        let next_kept = kept_count(&next.singular_values, config);
        let grew = next_kept > kept;
        dec = next;
        kept = next_kept;
        items = all;
        if !grew {
            break;
        }
    }

    let sv = &dec.singular_values;
    let top = sv.first().copied().unwrap_or(0.0);
    let discarded = &sv[kept..];
    let spectral_gap = match (kept, discarded.first()) {
        (0, _) => f64::INFINITY,
        (_, Some(&d)) if d > 0.0 => sv[kept - 1] / d,
        _ => f64::INFINITY,
    };
    let residual = if top > 0.0 {
        discarded.iter().map(|s| s * s).fold(0.0, |a, b| a + b).sqrt() / top
    } else {
        0.0
    };
    let basis = orthonormalize(
        &dec.directions[..kept].iter().map(skew_part).collect::<Vec<_>>(),
        1e-8,
    );
    Ok(AlgebraEstimate {
        dim: basis.len(),
        basis,
        spectral_gap,
        residual,
        singular_values: sv.clone(),
        max_symmetric_defect,
        empty_warning: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Catalog id of the smallest subgroup containing the estimate up to
    /// conjugation, `None` when no candidate fits within tolerance.
    pub subgroup: Option<String>,
    pub subgroup_dim: Option<usize>,
    /// `U` with `U · algebra · Uᵀ` inside the subgroup's algebra.
    pub witness: Matrix,
    pub residual: f64,
}

impl Classification {
    pub fn id(&self) -> &str {
        self.subgroup.as_deref().unwrap_or("unclassified")
    }
}

/// Smallest-dimensional catalog subgroup containing a conjugate of the
/// estimated algebra; ties at equal dimension go to the lower residual.
pub fn classify(estimate: &AlgebraEstimate, catalog: &[SubgroupSpec], restarts: usize, tol: f64, seed: u64) -> Result<Classification> {
    let l = catalog
        .first()
        .map(|s| s.ambient_dim)
        .ok_or_else(|| Error::InvalidArgument("empty subgroup catalog".into()))?;
    if let Some(dim) = estimate.ambient_dim() {
        if dim != l {
            return Err(Error::DimensionMismatch { expected: l, found: dim });
        }
    }
    let mut candidates: Vec<&SubgroupSpec> = catalog.iter().filter(|s| s.group_dim() >= estimate.dim).collect();
    candidates.sort_by_key(|s| s.group_dim());
    let mut best_any: Option<(f64, Matrix)> = None;
    let mut chosen: Option<(&SubgroupSpec, f64, Matrix)> = None;
    for spec in candidates {
        if let Some((c, _, _)) = &chosen {
            if spec.group_dim() > c.group_dim() {
                break;
            }
        }
        let v = conjugacy_search(&estimate.basis, spec, restarts, tol, seed);
        if best_any.as_ref().is_none_or(|(r, _)| v.residual < *r) {
            best_any = Some((v.residual, v.witness.clone()));
        }
        if v.holds && chosen.as_ref().is_none_or(|(_, r, _)| v.residual < *r) {
            chosen = Some((spec, v.residual, v.witness));
        }
    }
    Ok(match chosen {
        Some((spec, residual, witness)) => Classification {
            subgroup: Some(spec.id.clone()),
            subgroup_dim: Some(spec.group_dim()),
            witness,
            residual,
        },
        None => {
            let (residual, witness) = best_any.unwrap_or((f64::INFINITY, Matrix::identity(l, l)));
            Classification {
                subgroup: None,
                subgroup_dim: None,
                witness,
                residual,
            }
        }
    })
}
