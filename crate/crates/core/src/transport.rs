//! Parallel transport along piecewise-differentiable loops.
//!
//! Transport solves `ṡ(t) = −Σᵢ ċⁱ(t) A_i(c(t)) s(t)`, `s(0) = I`, segment by
//! segment with fixed-step RK4. Traversing `c` then `d` gives `P = P_d · P_c`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{c0_connection_distance, ChartDomain, ConnectionField, MetricFamily};
use crate::linalg::{so_residual, BilinearForm, Matrix};

/// Minimum total step count accepted by [`parallel_transport`].
pub const MIN_STEPS: usize = 16;

/// Samples per segment used to check that a loop stays inside the chart.
const CHART_SAMPLES: usize = 64;

/// Tolerance on segment endpoints chaining together.
const CHAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Curve {
    Line {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    /// `center + radius (cos φ e_p + sin φ e_q)` with `φ = start_angle + sweep·t`.
    Arc {
        center: Vec<f64>,
        radius: f64,
        plane: (usize, usize),
        start_angle: f64,
        sweep: f64,
    },
    /// `base + Σ_m cos_m (cos(2πmt) − 1) + sin_m sin(2πmt)`, closed at `base`.
    Fourier {
        base: Vec<f64>,
        cos: Vec<Vec<f64>>,
        sin: Vec<Vec<f64>>,
    },
}

impl Curve {
    pub fn dim(&self) -> usize {
        match self {
            Curve::Line { from, .. } => from.len(),
            Curve::Arc { center, .. } => center.len(),
            Curve::Fourier { base, .. } => base.len(),
        }
    }

    fn position(&self, t: f64) -> Vec<f64> {
        match self {
            Curve::Line { from, to } => from.iter().zip(to).map(|(a, b)| a + (b - a) * t).collect(),
            Curve::Arc {
                center,
                radius,
                plane: (p, q),
                start_angle,
                sweep,
            } => {
                let phi = start_angle + sweep * t;
                let mut x = center.clone();
                x[*p] += radius * phi.cos();
                x[*q] += radius * phi.sin();
                x
            }
            Curve::Fourier { base, cos, sin } => {
                let mut x = base.clone();
                for (m, (a, b)) in cos.iter().zip(sin).enumerate() {
                    let w = TAU * (m + 1) as f64;
                    let (s, c) = (w * t).sin_cos();
                    for d in 0..x.len() {
                        x[d] += a[d] * (c - 1.0) + b[d] * s;
                    }
                }
                x
            }
        }
    }

    fn velocity(&self, t: f64) -> Vec<f64> {
        match self {
            Curve::Line { from, to } => from.iter().zip(to).map(|(a, b)| b - a).collect(),
            Curve::Arc {
                center,
                radius,
                plane: (p, q),
                start_angle,
                sweep,
            } => {
                let phi = start_angle + sweep * t;
                let mut v = vec![0.0; center.len()];
                v[*p] = -radius * sweep * phi.sin();
                v[*q] = radius * sweep * phi.cos();
                v
            }
            Curve::Fourier { base, cos, sin } => {
                let mut v = vec![0.0; base.len()];
                for (m, (a, b)) in cos.iter().zip(sin).enumerate() {
                    let w = TAU * (m + 1) as f64;
                    let (s, c) = (w * t).sin_cos();
                    for d in 0..v.len() {
                        v[d] += -a[d] * w * s + b[d] * w * c;
                    }
                }
                v
            }
        }
    }
}

/// Time profile applied to a segment parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Profile {
    #[default]
    Identity,
    /// `τ(t) = t − sin(2πt)/(2π)`: strictly increasing, `τ'(0) = τ'(1) = 0`.
    SmoothBump,
}

impl Profile {
    fn apply(self, t: f64) -> (f64, f64) {
        match self {
            Profile::Identity => (t, 1.0),
            Profile::SmoothBump => (t - (TAU * t).sin() / TAU, 1.0 - (TAU * t).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub curve: Curve,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub reversed: bool,
}

impl Segment {
    pub fn new(curve: Curve) -> Self {
        Self {
            curve,
            profile: Profile::Identity,
            reversed: false,
        }
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        let u = if self.reversed { 1.0 - t } else { t };
        let (tau, _) = self.profile.apply(u);
        self.curve.position(tau)
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let (u, sign) = if self.reversed { (1.0 - t, -1.0) } else { (t, 1.0) };
        let (tau, dtau) = self.profile.apply(u);
        self.curve
            .velocity(tau)
            .into_iter()
            .map(|v| v * dtau * sign)
            .collect()
    }

    pub fn start(&self) -> Vec<f64> {
        self.position(0.0)
    }

    pub fn end(&self) -> Vec<f64> {
        self.position(1.0)
    }
}

/// A closed chain of segments based at `basepoint`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    pub segments: Vec<Segment>,
    pub basepoint: Vec<f64>,
    pub label: String,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl LoopPath {
    pub fn new(segments: Vec<Segment>, basepoint: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let path = Self {
            segments,
            basepoint,
            label: label.into(),
        };
        path.validate()?;
        Ok(path)
    }

    pub fn from_curves(curves: Vec<Curve>, basepoint: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::new(curves.into_iter().map(Segment::new).collect(), basepoint, label)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.basepoint.len();
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::InvalidLoop(format!("{}: no segments", self.label)))?;
        if self.segments.iter().any(|s| s.curve.dim() != n) {
            return Err(Error::InvalidLoop(format!("{}: segment dimension differs from basepoint", self.label)));
        }
        let scale = 1.0 + self.basepoint.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if distance(&first.start(), &self.basepoint) > CHAIN_TOL * scale {
            return Err(Error::InvalidLoop(format!("{}: does not start at the basepoint", self.label)));
        }
        for pair in self.segments.windows(2) {
            if distance(&pair[0].end(), &pair[1].start()) > CHAIN_TOL * scale {
                return Err(Error::InvalidLoop(format!("{}: segments do not chain", self.label)));
            }
        }
        let last = self.segments.last().expect("nonempty");
        if distance(&last.end(), &self.basepoint) > CHAIN_TOL * scale {
            return Err(Error::InvalidLoop(format!("{}: does not close at the basepoint", self.label)));
        }
        Ok(())
    }

    /// The same image traversed backwards.
    pub fn reversed(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| Segment {
                reversed: !s.reversed,
                ..s.clone()
            })
            .collect();
        Self {
            segments,
            basepoint: self.basepoint.clone(),
            label: format!("{}~rev", self.label),
        }
    }

    /// Traverses `self` then `other`.
    pub fn then(&self, other: &LoopPath) -> Result<Self> {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Self::new(segments, self.basepoint.clone(), format!("{}+{}", self.label, other.label))
    }

    pub fn inside(&self, chart: &ChartDomain) -> bool {
        self.segments.iter().all(|s| {
            (0..=CHART_SAMPLES).all(|i| chart.contains_interior(&s.position(i as f64 / CHART_SAMPLES as f64)))
        })
    }

    fn check_inside(&self, chart: &ChartDomain) -> Result<()> {
        if self.basepoint.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                found: self.basepoint.len(),
            });
        }
        for s in &self.segments {
            for i in 0..=CHART_SAMPLES {
                let p = s.position(i as f64 / CHART_SAMPLES as f64);
                if !chart.contains_interior(&p) {
                    return Err(Error::OutsideChart { point: p });
                }
            }
        }
        Ok(())
    }
}

/// Reparametrizes every segment by the smooth bump profile so the velocity
/// vanishes at all segment endpoints. Image and transport are unchanged.
pub fn reparametrize_smooth(path: &LoopPath) -> LoopPath {
    LoopPath {
        segments: path
            .segments
            .iter()
            .map(|s| Segment {
                profile: Profile::SmoothBump,
                ..s.clone()
            })
            .collect(),
        basepoint: path.basepoint.clone(),
        label: format!("{}~smooth", path.label),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    /// `P_c`, acting on fibre coordinates at the basepoint.
    pub matrix: Matrix,
    /// `‖P_h − P_{2h}‖_F / 15`.
    pub error_estimate: f64,
    /// `so_residual(P_c, M_g)` at the basepoint.
    pub so_defect: f64,
    pub steps_used: usize,
}

/// `B(t) = Σᵢ ċⁱ A_i(c(t))`.
fn generator(conn: &ConnectionField, segment: &Segment, t: f64) -> Result<Matrix> {
    let x = segment.position(t);
    let v = segment.velocity(t);
    let a = conn.coefficients(&x);
    let l = conn.fibre_dim();
    let mut b = Matrix::zeros(l, l);
    for (vi, ai) in v.iter().zip(&a) {
        if *vi != 0.0 {
            b += ai * *vi;
        }
    }
    if b.iter().all(|e| e.is_finite()) {
        Ok(b)
    } else {
        Err(Error::NonFinite(format!("connection coefficients at {x:?}")))
    }
}

/// RK4 integration of one segment from `s(0) = I`.
fn transport_segment(conn: &ConnectionField, segment: &Segment, steps: usize) -> Result<Matrix> {
    let l = conn.fibre_dim();
    let h = 1.0 / steps as f64;
    let mut s = Matrix::identity(l, l);
    let mut b_start = generator(conn, segment, 0.0)?;
    for i in 0..steps {
        let t = i as f64 * h;
        let b_mid = generator(conn, segment, t + 0.5 * h)?;
        let b_end = generator(conn, segment, t + h)?;
        let k1 = -(&b_start * &s);
        let k2 = -(&b_mid * (&s + &k1 * (0.5 * h)));
        let k3 = -(&b_mid * (&s + &k2 * (0.5 * h)));
        let k4 = -(&b_end * (&s + &k3 * h));
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        b_start = b_end;
    }
    Ok(s)
}

/// Transport of every segment separately, in traversal order.
pub fn segment_transports(conn: &ConnectionField, path: &LoopPath, steps_per_segment: usize) -> Result<Vec<Matrix>> {
    path.segments
        .iter()
        .map(|s| transport_segment(conn, s, steps_per_segment))
        .collect()
}

fn compose(transports: &[Matrix], l: usize) -> Matrix {
    transports
        .iter()
        .fold(Matrix::identity(l, l), |acc, p| p * acc)
}

/// Parallel transport around `path` with `steps` RK4 steps in total, split
/// evenly over the segments, plus a rerun at half the step size.
///
/// Returns the half-step result; it is not projected onto the rotation group.
pub fn parallel_transport(
    conn: &ConnectionField,
    path: &LoopPath,
    chart: &ChartDomain,
    base_metric: &BilinearForm,
    steps: usize,
) -> Result<TransportResult> {
    if steps < MIN_STEPS {
        return Err(Error::InvalidArgument(format!("steps must be at least {MIN_STEPS}, got {steps}")));
    }
    if conn.base_dim() != chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            found: conn.base_dim(),
        });
    }
    if base_metric.dim() != conn.fibre_dim() {
        return Err(Error::DimensionMismatch {
            expected: conn.fibre_dim(),
            found: base_metric.dim(),
        });
    }
    path.validate()?;
    path.check_inside(chart)?;
    let l = conn.fibre_dim();
    let per_segment = (steps / path.segments.len()).max(4);
    let coarse = compose(&segment_transports(conn, path, per_segment)?, l);
    let fine = compose(&segment_transports(conn, path, 2 * per_segment)?, l);
    let error_estimate = (&fine - &coarse).norm() / 15.0;
    let so_defect = so_residual(&fine, base_metric.matrix());
    Ok(TransportResult {
        matrix: fine,
        error_estimate,
        so_defect,
        steps_used: 2 * per_segment * path.segments.len(),
    })
}

/// Which loops [`loop_catalog`] generates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopCatalogSpec {
    /// Side lengths of the coordinate-plane squares, one square per index pair and scale.
    pub square_scales: Vec<f64>,
    /// Length of the spoke joining the basepoint to each square; 0 anchors squares at the basepoint.
    pub spoke_length: f64,
    /// Radii of circles in the `(0, 1)` plane; each gives one circle through and one around the basepoint.
    pub circle_radii: Vec<f64>,
    pub random_count: usize,
    pub seed: u64,
    /// Bound on the first Fourier mode of random loops; mode `m` is scaled by `1/m²`.
    pub random_amplitude: f64,
    pub fourier_modes: usize,
}

impl Default for LoopCatalogSpec {
    fn default() -> Self {
        Self {
            square_scales: vec![0.05, 0.1],
            spoke_length: 0.0,
            circle_radii: vec![0.05, 0.1],
            random_count: 4,
            seed: 7,
            random_amplitude: 0.05,
            fourier_modes: 3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoopCatalog {
    pub loops: Vec<LoopPath>,
    /// One line per shrunk or rejected loop.
    pub report: Vec<String>,
}

const MAX_SHRINKS: usize = 6;

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn offset(x: &[f64], dir: &[f64], s: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, b)| a + b * s).collect()
}

/// Counter-clockwise square of side `eps` in the `(i, j)` plane with one corner
/// at `corner`: `corner → +e_i → +e_j → −e_i → corner`.
pub fn square_loop(corner: &[f64], i: usize, j: usize, eps: f64, label: impl Into<String>) -> Result<LoopPath> {
    let n = corner.len();
    let (ei, ej) = (unit(n, i), unit(n, j));
    let p0 = corner.to_vec();
    let p1 = offset(&p0, &ei, eps);
    let p2 = offset(&p1, &ej, eps);
    let p3 = offset(&p0, &ej, eps);
    LoopPath::from_curves(
        vec![
            Curve::Line { from: p0.clone(), to: p1.clone() },
            Curve::Line { from: p1, to: p2.clone() },
            Curve::Line { from: p2, to: p3.clone() },
            Curve::Line { from: p3, to: p0.clone() },
        ],
        p0,
        label,
    )
}

/// Counter-clockwise circle of radius `radius` about `center` in the `(0, 1)`
/// plane, starting and ending at `center + radius e_0`.
pub fn circle_loop(center: &[f64], radius: f64, label: impl Into<String>) -> Result<LoopPath> {
    let start = offset(center, &unit(center.len(), 0), radius);
    LoopPath::from_curves(
        vec![Curve::Arc {
            center: center.to_vec(),
            radius,
            plane: (0, 1),
            start_angle: 0.0,
            sweep: TAU,
        }],
        start,
        label,
    )
}

fn lasso_square(x: &[f64], i: usize, j: usize, eps: f64, spoke: f64) -> Result<LoopPath> {
    let label = format!("square-{i}-{j}-{eps}");
    if spoke == 0.0 {
        return square_loop(x, i, j, eps, label);
    }
    let n = x.len();
    let dir: Vec<f64> = (0..n)
        .map(|d| if d == i || d == j { std::f64::consts::FRAC_1_SQRT_2 } else { 0.0 })
        .collect();
    let corner = offset(x, &dir, spoke);
    let square = square_loop(&corner, i, j, eps, "")?;
    let mut segments = vec![Segment::new(Curve::Line { from: x.to_vec(), to: corner.clone() })];
    segments.extend(square.segments);
    segments.push(Segment::new(Curve::Line { from: corner, to: x.to_vec() }));
    LoopPath::new(segments, x.to_vec(), label)
}

/// Generates the sampling loops based at `x`: lasso squares for every index
/// pair and scale, circles through and around `x`, and seeded random Fourier
/// loops. Loops leaving the chart interior are shrunk by halving, up to
/// [`MAX_SHRINKS`] times, and otherwise rejected; both cases are reported.
pub fn loop_catalog(x: &[f64], spec: &LoopCatalogSpec, chart: &ChartDomain) -> Result<LoopCatalog> {
    chart.check_interior(x)?;
    let n = x.len();
    let mut catalog = LoopCatalog::default();
    let push = |catalog: &mut LoopCatalog, label: String, build: &dyn Fn(f64) -> Result<LoopPath>| -> Result<()> {
        let mut scale = 1.0;
        for attempt in 0..=MAX_SHRINKS {
            let path = build(scale)?;
            if path.inside(chart) {
                if attempt > 0 {
                    catalog.report.push(format!("{label}: shrunk by factor {scale}"));
                }
                catalog.loops.push(path);
                return Ok(());
            }
            scale *= 0.5;
        }
        catalog.report.push(format!("{label}: rejected, leaves the chart interior"));
        Ok(())
    };

    for &eps in &spec.square_scales {
        for i in 0..n {
            for j in (i + 1)..n {
                let spoke = spec.spoke_length;
                push(&mut catalog, format!("square-{i}-{j}-{eps}"), &|s| {
                    let mut path = lasso_square(x, i, j, eps * s, spoke * s)?;
                    path.label = format!("square-{i}-{j}-{eps}");
                    Ok(path)
                })?;
            }
        }
    }

    for &r in &spec.circle_radii {
        push(&mut catalog, format!("circle-through-{r}"), &|s| {
            let center = offset(x, &unit(n, 0), -r * s);
            let mut path = circle_loop(&center, r * s, format!("circle-through-{r}"))?;
            // Rebase exactly on x; the start point equals x up to rounding.
            path.basepoint = x.to_vec();
            if let Curve::Arc { center, .. } = &mut path.segments[0].curve {
                *center = offset(x, &unit(n, 0), -r * s);
            }
            path.validate()?;
            Ok(path)
        })?;
        push(&mut catalog, format!("circle-around-{r}"), &|s| {
            let rim = offset(x, &unit(n, 0), r * s);
            let circle = circle_loop(x, r * s, "")?;
            let mut segments = vec![Segment::new(Curve::Line { from: x.to_vec(), to: rim.clone() })];
            segments.extend(circle.segments);
            segments.push(Segment::new(Curve::Line { from: rim, to: x.to_vec() }));
            LoopPath::new(segments, x.to_vec(), format!("circle-around-{r}"))
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for idx in 0..spec.random_count {
        let modes = spec.fourier_modes.max(1);
        let mut draw = || -> Vec<Vec<f64>> {
            (0..modes)
                .map(|m| {
                    let bound = spec.random_amplitude / ((m + 1) * (m + 1)) as f64;
                    (0..n).map(|_| rng.random_range(-1.0..=1.0) * bound).collect()
                })
                .collect()
        };
        let cos = draw();
        let sin = draw();
        push(&mut catalog, format!("fourier-{idx}"), &|s| {
            let scale = |c: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                c.iter().map(|v| v.iter().map(|a| a * s).collect()).collect()
            };
            LoopPath::from_curves(
                vec![Curve::Fourier {
                    base: x.to_vec(),
                    cos: scale(&cos),
                    sin: scale(&sin),
                }],
                x.to_vec(),
                format!("fourier-{idx}"),
            )
        })?;
    }
    Ok(catalog)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: u32,
    /// `‖P_c^{∇k} − P_c^{∇}‖_F` in chart coordinates.
    pub transport_distance: f64,
    pub c0_distance: f64,
    /// Sum of the two transports' error estimates.
    pub error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Smallest `C` with `transport_distance ≤ C · c0_distance` on every row.
    pub envelope_constant: f64,
    /// Least-squares slope through the origin of transport vs connection distance.
    pub regression_slope: f64,
    /// Largest over smallest per-row ratio; near 1 when the dependence is linear.
    pub ratio_spread: f64,
}

/// Transport distance to the limit connection along `path` for each `k`,
/// next to the C⁰ distance of the connections.
pub fn transport_convergence_table(
    family: &MetricFamily,
    path: &LoopPath,
    ks: &[u32],
    steps: usize,
    grid: usize,
) -> Result<ConvergenceTable> {
    let step = family.chart.default_step();
    let limit_metric = family.limit();
    let limit_conn = ConnectionField::levi_civita(limit_metric, step);
    let limit_form = limit_metric.form(&path.basepoint)?;
    let limit = parallel_transport(&limit_conn, path, &family.chart, &limit_form, steps)?;
    let rows = ks
        .par_iter()
        .map(|&k| -> Result<ConvergenceRow> {
            let metric = family.member(k)?;
            let conn = ConnectionField::levi_civita(&metric, step);
            let form = metric.form(&path.basepoint)?;
            let p = parallel_transport(&conn, path, &family.chart, &form, steps)?;
            Ok(ConvergenceRow {
                k,
                transport_distance: (&p.matrix - &limit.matrix).norm(),
                c0_distance: c0_connection_distance(&conn, &limit_conn, &family.chart, grid)?,
                error_estimate: p.error_estimate + limit.error_estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.c0_distance > 0.0)
        .map(|r| r.transport_distance / r.c0_distance)
        .collect();
    let envelope_constant = ratios.iter().copied().fold(0.0, f64::max);
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_spread = if ratios.is_empty() || min_ratio == 0.0 {
        f64::NAN
    } else {
        envelope_constant / min_ratio
    };
    let sxy: f64 = rows.iter().map(|r| r.transport_distance * r.c0_distance).sum();
    let sxx: f64 = rows.iter().map(|r| r.c0_distance * r.c0_distance).sum();
    let regression_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(ConvergenceTable {
        rows,
        envelope_constant,
        regression_slope,
        ratio_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_family, FamilyParams};

    fn poincare() -> MetricFamily {
        builtin_family("poincare2d", &FamilyParams::new()).unwrap()
    }

    fn lc(fam: &MetricFamily, k: u32) -> (ConnectionField, crate::geometry::MetricField) {
        let g = fam.member(k).unwrap();
        (ConnectionField::levi_civita(&g, fam.chart.default_step()), g)
    }

    #[test]
    fn loops_must_chain_and_close() {
        let open = LoopPath::from_curves(
            vec![Curve::Line { from: vec![0.0, 0.0], to: vec![0.1, 0.0] }],
            vec![0.0, 0.0],
            "open",
        );
        assert!(matches!(open, Err(Error::InvalidLoop(_))));
        assert!(LoopPath::from_curves(vec![], vec![0.0, 0.0], "empty").is_err());
        assert!(square_loop(&[0.0, 0.0], 0, 1, 0.1, "sq").is_ok());
    }

    #[test]
    fn flat_connection_transports_to_identity() {
        let chart = ChartDomain::cube(3, 1.0, 0.1).unwrap();
        let conn = ConnectionField::flat(3, 3);
        let catalog = loop_catalog(&[0.1, 0.0, -0.1], &LoopCatalogSpec::default(), &chart).unwrap();
        for path in &catalog.loops {
            let p = parallel_transport(&conn, path, &chart, &BilinearForm::identity(3), 256).unwrap();
            assert!((p.matrix - Matrix::identity(3, 3)).amax() < 1e-12, "{}", path.label);
        }
    }

    #[test]
    fn transport_rejects_few_steps_and_exits() {
        let fam = poincare();
        let (conn, g) = lc(&fam, 2);
        let form = g.form(&[0.0, 0.0]).unwrap();
        let path = circle_loop(&[0.0, 0.0], 0.2, "c").unwrap();
        assert!(matches!(
            parallel_transport(&conn, &path, &fam.chart, &form, 8),
            Err(Error::InvalidArgument(_))
        ));
        let big = circle_loop(&[0.0, 0.0], 0.48, "big").unwrap();
        assert!(matches!(
            parallel_transport(&conn, &big, &fam.chart, &form, 256),
            Err(Error::OutsideChart { .. })
        ));
    }

    #[test]
    fn non_finite_coefficients_are_reported() {
        let chart = ChartDomain::cube(2, 1.0, 0.1).unwrap();
        let conn = ConnectionField::new("nan", 2, 2, |_| vec![Matrix::from_element(2, 2, f64::NAN); 2]);
        let path = square_loop(&[0.0, 0.0], 0, 1, 0.1, "sq").unwrap();
        assert!(matches!(
            parallel_transport(&conn, &path, &chart, &BilinearForm::identity(2), 64),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn smooth_reparametrization_zeroes_corner_velocities() {
        let path = square_loop(&[0.0, 0.0], 0, 1, 0.1, "sq").unwrap();
        let smooth = reparametrize_smooth(&path);
        for seg in &smooth.segments {
            for t in [0.0, 1.0] {
                assert!(seg.velocity(t).iter().all(|v| *v == 0.0));
            }
        }
        assert_eq!(smooth.segments[1].start(), path.segments[1].start());
    }

    #[test]
    fn smooth_reparametrization_preserves_circle_transport() {
        let fam = poincare();
        let (conn, g) = lc(&fam, 2);
        let path = circle_loop(&[0.0, 0.0], 0.3, "c").unwrap();
        let form = g.form(&path.basepoint).unwrap();
        let a = parallel_transport(&conn, &path, &fam.chart, &form, 4096).unwrap();
        let b = parallel_transport(&conn, &reparametrize_smooth(&path), &fam.chart, &form, 4096).unwrap();
        assert!((a.matrix - b.matrix).amax() < 1e-10);
    }

    #[test]
    fn smooth_square_matches_segmentwise_composition() {
        let fam = poincare();
        let (conn, g) = lc(&fam, 1);
        let path = square_loop(&[0.05, 0.0], 0, 1, 0.2, "sq").unwrap();
        let form = g.form(&path.basepoint).unwrap();
        // Oracle: each original straight segment transported on its own from I.
        let oracle = segment_transports(&conn, &path, 4096)
            .unwrap()
            .iter()
            .fold(Matrix::identity(2, 2), |acc, p| p * acc);
        let smooth = parallel_transport(&conn, &reparametrize_smooth(&path), &fam.chart, &form, 8192).unwrap();
        assert!((smooth.matrix - oracle).amax() < 1e-9);
    }

    #[test]
    fn composition_of_loops_multiplies_transports() {
        let fam = poincare();
        let (conn, g) = lc(&fam, 2);
        let x = [0.05, 0.0];
        let form = g.form(&x).unwrap();
        let c = square_loop(&x, 0, 1, 0.15, "c").unwrap();
        let catalog = loop_catalog(&x, &LoopCatalogSpec::default(), &fam.chart).unwrap();
        let d = catalog.loops.iter().find(|l| l.label.starts_with("fourier")).unwrap();
        let pc = parallel_transport(&conn, &c, &fam.chart, &form, 2048).unwrap();
        let pd = parallel_transport(&conn, d, &fam.chart, &form, 2048).unwrap();
        let both = parallel_transport(&conn, &c.then(d).unwrap(), &fam.chart, &form, 4096).unwrap();
        let diff = (&both.matrix - &pd.matrix * &pc.matrix).norm();
        assert!(diff <= both.error_estimate + pc.error_estimate + pd.error_estimate + 1e-13, "{diff}");
    }

    #[test]
    fn reversed_loop_transports_to_the_inverse() {
        let fam = poincare();
        let (conn, g) = lc(&fam, 1);
        let x = [0.05, 0.0];
        let form = g.form(&x).unwrap();
        let catalog = loop_catalog(&x, &LoopCatalogSpec::default(), &fam.chart).unwrap();
        for path in &catalog.loops {
            let p = parallel_transport(&conn, path, &fam.chart, &form, 2048).unwrap();
            let q = parallel_transport(&conn, &path.reversed(), &fam.chart, &form, 2048).unwrap();
            let inv = p.matrix.clone().try_inverse().unwrap();
            let diff = (&q.matrix - inv).norm();
            assert!(diff <= p.error_estimate + q.error_estimate + 1e-13, "{}: {diff}", path.label);
        }
    }

    #[test]
    fn error_estimate_shows_fourth_order() {
        let fam = poincare();
        let (conn, g) = lc(&fam, 1);
        let path = circle_loop(&[0.0, 0.0], 0.4, "c").unwrap();
        let form = g.form(&path.basepoint).unwrap();
        let e1 = parallel_transport(&conn, &path, &fam.chart, &form, 64).unwrap().error_estimate;
        let e2 = parallel_transport(&conn, &path, &fam.chart, &form, 128).unwrap().error_estimate;
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn metric_transports_are_rotations_of_the_basepoint_metric() {
        for name in ["poincare2d", "product4d", "sheared_poincare", "fubini_study_chart"] {
            let fam = builtin_family(name, &FamilyParams::new()).unwrap();
            let (conn, g) = lc(&fam, 1);
            let x = fam.basepoint.clone();
            let form = g.form(&x).unwrap();
            let catalog = loop_catalog(&x, &LoopCatalogSpec::default(), &fam.chart).unwrap();
            for path in &catalog.loops {
                let p = parallel_transport(&conn, path, &fam.chart, &form, 2048).unwrap();
                assert!(p.so_defect <= f64::max(1e-8, 10.0 * p.error_estimate), "{name} {}: {}", path.label, p.so_defect);
            }
        }
    }

    #[test]
    fn catalog_counts_and_determinism() {
        let chart2 = ChartDomain::cube(2, 1.0, 0.1).unwrap();
        let spec = LoopCatalogSpec {
            square_scales: vec![0.05],
            circle_radii: vec![],
            random_count: 0,
            ..Default::default()
        };
        assert_eq!(loop_catalog(&[0.0, 0.0], &spec, &chart2).unwrap().loops.len(), 1);
        let chart4 = ChartDomain::cube(4, 1.0, 0.1).unwrap();
        assert_eq!(loop_catalog(&[0.0; 4], &spec, &chart4).unwrap().loops.len(), 6);

        let random = LoopCatalogSpec {
            square_scales: vec![],
            circle_radii: vec![],
            random_count: 3,
            seed: 99,
            ..Default::default()
        };
        let a = loop_catalog(&[0.0, 0.0], &random, &chart2).unwrap();
        let b = loop_catalog(&[0.0, 0.0], &random, &chart2).unwrap();
        assert_eq!(a.loops, b.loops);
        let bits = |c: &LoopCatalog| -> Vec<u64> {
            c.loops
                .iter()
                .flat_map(|l| l.segments[0].position(0.3))
                .map(f64::to_bits)
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn oversized_loops_are_shrunk_or_rejected() {
        let chart = ChartDomain::cube(2, 0.5, 0.05).unwrap();
        let spec = LoopCatalogSpec {
            square_scales: vec![0.6],
            circle_radii: vec![],
            random_count: 0,
            ..Default::default()
        };
        let cat = loop_catalog(&[0.0, 0.0], &spec, &chart).unwrap();
        assert_eq!(cat.loops.len(), 1);
        assert_eq!(cat.report.len(), 1);
        assert!(cat.report[0].contains("shrunk"));
        assert!(cat.loops.iter().all(|l| l.inside(&chart)));
    }

    #[test]
    fn lasso_spokes_keep_the_loop_based_at_x() {
        let chart = ChartDomain::cube(3, 1.0, 0.1).unwrap();
        let spec = LoopCatalogSpec {
            spoke_length: 0.1,
            ..Default::default()
        };
        let cat = loop_catalog(&[0.0, 0.1, 0.0], &spec, &chart).unwrap();
        for l in &cat.loops {
            l.validate().unwrap();
            assert_eq!(l.basepoint, vec![0.0, 0.1, 0.0]);
        }
        assert!(cat.loops.iter().any(|l| l.segments.len() == 6));
    }

    #[test]
    fn constant_family_has_zero_transport_distance() {
        let fam = builtin_family("flat", &FamilyParams::new()).unwrap();
        let path = circle_loop(&[0.0, 0.0], 0.2, "c").unwrap();
        let table = transport_convergence_table(&fam, &path, &[1, 2, 3], 512, 5).unwrap();
        for row in &table.rows {
            assert!(row.transport_distance <= 2.0 * row.error_estimate + 1e-15);
            assert_eq!(row.c0_distance, 0.0);
        }
    }
}
