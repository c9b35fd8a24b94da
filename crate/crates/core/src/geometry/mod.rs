//! Metrics, connections and curvature on a single coordinate chart.
//!
//! A connection on the fibre bundle is stored by its coefficient matrices
//! `A_1..A_n` (one `l×l` matrix per coordinate direction), so that the
//! covariant derivative of a section `s` along `∂_i` reads `∂_i s + A_i s`.
//! For a Levi-Civita connection `(A_i)ᵏⱼ = Γᵏᵢⱼ`.

mod families;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BilinearForm, Matrix};

pub use families::{builtin_family, standard_complex_structure, FamilyParams, MetricFamily, BUILTIN_FAMILIES};

/// Default finite-difference step as a fraction of the smallest chart extent.
pub const FD_STEP_FRACTION: f64 = 1e-4;

/// A coordinate box, optionally intersected with a centered ball, with an
/// interior safety band of width `margin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
}

impl ChartDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, margin: f64) -> Result<Self> {
        let chart = Self {
            lower,
            upper,
            margin,
            ball_radius: None,
        };
        chart.validate()?;
        Ok(chart)
    }

    pub fn cube(dim: usize, half_width: f64, margin: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim], margin)
    }

    pub fn with_ball(mut self, radius: f64) -> Result<Self> {
        self.ball_radius = Some(radius);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidChart(format!(
                "bounds must be nonempty and of equal length ({} vs {})",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::InvalidChart("need lower < upper in every coordinate".into()));
        }
        if !(self.margin > 0.0) || self.margin >= 0.5 * self.min_extent() {
            return Err(Error::InvalidChart(format!(
                "margin {} must be positive and below half the smallest extent {}",
                self.margin,
                self.min_extent()
            )));
        }
        if let Some(r) = self.ball_radius {
            if !(r > self.margin) {
                return Err(Error::InvalidChart(format!(
                    "ball radius {r} must exceed the margin"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn min_extent(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn default_step(&self) -> f64 {
        FD_STEP_FRACTION * self.min_extent()
    }

    /// True when `x` keeps distance `margin` from every boundary face.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let in_box = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= lo + self.margin && *v <= hi - self.margin);
        let in_ball = self
            .ball_radius
            .is_none_or(|r| x.iter().map(|v| v * v).sum::<f64>().sqrt() <= r - self.margin);
        in_box && in_ball
    }

    pub fn check_interior(&self, x: &[f64]) -> Result<()> {
        if self.contains_interior(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart { point: x.to_vec() })
        }
    }

    /// Lattice with `per_axis` points per coordinate spanning the interior box;
    /// points outside the interior ball are skipped.
    pub fn grid(&self, per_axis: usize) -> Result<Vec<Vec<f64>>> {
        if per_axis < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points per axis, got {per_axis}"
            )));
        }
        let n = self.dim();
        let total = per_axis.checked_pow(n as u32).ok_or_else(|| {
            Error::InvalidArgument(format!("grid {per_axis}^{n} overflows"))
        })?;
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let p: Vec<f64> = (0..n)
                .map(|d| {
                    let lo = self.lower[d] + self.margin;
                    let hi = self.upper[d] - self.margin;
                    lo + (hi - lo) * idx[d] as f64 / (per_axis - 1) as f64
                })
                .collect();
            if self.contains_interior(&p) {
                points.push(p);
            }
            for d in 0..n {
                idx[d] += 1;
                if idx[d] < per_axis {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(points)
    }
}

type MetricFn = dyn Fn(&[f64]) -> Matrix + Send + Sync;
type FieldDerivFn = dyn Fn(&[f64]) -> Vec<Matrix> + Send + Sync;

/// A field of symmetric positive-definite matrices on the chart, with optional
/// analytic first derivatives `∂_i M`.
#[derive(Clone)]
pub struct MetricField {
    label: String,
    dim: usize,
    eval: Arc<MetricFn>,
    derivative: Option<Arc<FieldDerivFn>>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl MetricField {
    pub fn new<F>(label: impl Into<String>, dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            dim,
            eval: Arc::new(eval),
            derivative: None,
        }
    }

    pub fn with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<Matrix> + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    /// Same field with the analytic derivative dropped (forces finite differences).
    pub fn without_derivative(&self) -> Self {
        Self {
            derivative: None,
            ..self.clone()
        }
    }

    /// A constant metric; its derivatives are exactly zero.
    pub fn constant(label: impl Into<String>, matrix: Matrix) -> Self {
        let dim = matrix.nrows();
        let zero = Matrix::zeros(dim, dim);
        let m = matrix.clone();
        Self::new(label, dim, move |_| m.clone())
            .with_derivative(move |_| vec![zero.clone(); dim])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn evaluate(&self, x: &[f64]) -> Matrix {
        (self.eval)(x)
    }

    pub fn form(&self, x: &[f64]) -> Result<BilinearForm> {
        BilinearForm::metric(self.evaluate(x))
    }

    /// `∂_i M(x)` for every coordinate `i`: analytic when available, central
    /// differences with `step` otherwise.
    pub fn derivatives(&self, x: &[f64], step: f64) -> Vec<Matrix> {
        match &self.derivative {
            Some(d) => d(x),
            None => self.finite_difference_derivatives(x, step),
        }
    }

    pub fn finite_difference_derivatives(&self, x: &[f64], step: f64) -> Vec<Matrix> {
        central_differences(x, step, |p| vec![self.evaluate(p)])
            .into_iter()
            .map(|mut v| v.remove(0))
            .collect()
    }
}

/// `out[i][j] = ∂_i f_j(x)` by second-order central differences.
fn central_differences<F>(x: &[f64], step: f64, f: F) -> Vec<Vec<Matrix>>
where
    F: Fn(&[f64]) -> Vec<Matrix>,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let plus = f(&probe);
            probe[i] = x[i] - step;
            let minus = f(&probe);
            probe[i] = x[i];
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * step))
                .collect()
        })
        .collect()
}

type CoefficientFn = dyn Fn(&[f64]) -> Vec<Matrix> + Send + Sync;

/// Coefficient matrices `A_1..A_n` of a connection, each `l×l`.
#[derive(Clone)]
pub struct ConnectionField {
    label: String,
    base_dim: usize,
    fibre_dim: usize,
    coefficients: Arc<CoefficientFn>,
}

impl std::fmt::Debug for ConnectionField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConnectionField")
            .field("label", &self.label)
            .field("base_dim", &self.base_dim)
            .field("fibre_dim", &self.fibre_dim)
            .finish()
    }
}

impl ConnectionField {
    pub fn new<F>(label: impl Into<String>, base_dim: usize, fibre_dim: usize, coefficients: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<Matrix> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            base_dim,
            fibre_dim,
            coefficients: Arc::new(coefficients),
        }
    }

    /// The trivial connection `d` on `R^l` over an `n`-dimensional chart.
    pub fn flat(base_dim: usize, fibre_dim: usize) -> Self {
        let zero = Matrix::zeros(fibre_dim, fibre_dim);
        Self::new("flat", base_dim, fibre_dim, move |_| vec![zero.clone(); base_dim])
    }

    /// Levi-Civita connection of `metric`; derivatives are analytic when the
    /// metric provides them and central differences with `step` otherwise.
    pub fn levi_civita(metric: &MetricField, step: f64) -> Self {
        let m = metric.clone();
        let n = metric.dim();
        Self::new(format!("levi-civita[{}]", metric.label()), n, n, move |x| {
            let g = m.evaluate(x);
            let dg = m.derivatives(x, step);
            christoffel_from_parts(&g, &dg).unwrap_or_else(|_| vec![Matrix::from_element(n, n, f64::NAN); n])
        })
    }

    /// This connection with `offset` added to the coefficient in `slot`.
    pub fn with_offset(&self, slot: usize, offset: Matrix) -> Self {
        let inner = self.coefficients.clone();
        Self::new(
            format!("{}+offset[{slot}]", self.label),
            self.base_dim,
            self.fibre_dim,
            move |x| {
                let mut a = inner(x);
                a[slot] += &offset;
                a
            },
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fibre_dim(&self) -> usize {
        self.fibre_dim
    }

    pub fn coefficients(&self, x: &[f64]) -> Vec<Matrix> {
        (self.coefficients)(x)
    }
}

/// Christoffel symbols at `x` as coefficient matrices `(A_i)ᵏⱼ = Γᵏᵢⱼ`.
pub fn christoffel(metric: &MetricField, x: &[f64], step: f64, chart: &ChartDomain) -> Result<Vec<Matrix>> {
    chart.check_interior(x)?;
    let g = metric.form(x)?;
    let dg = metric.derivatives(x, step);
    christoffel_from_parts(g.matrix(), &dg)
}

/// `Γᵏᵢⱼ = ½ gᵏˡ (∂ᵢ g_{jl} + ∂ⱼ g_{il} − ∂_l g_{ij})`.
pub(crate) fn christoffel_from_parts(g: &Matrix, dg: &[Matrix]) -> Result<Vec<Matrix>> {
    let n = g.nrows();
    let g_inv = g.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    // Lowered symbols Γ_{l,ij} = ½(∂ᵢ g_{jl} + ∂ⱼ g_{il} − ∂_l g_{ij}).
    let mut out = vec![Matrix::zeros(n, n); n];
    for (i, a_i) in out.iter_mut().enumerate() {
        let mut lowered = Matrix::zeros(n, n); // (l, j)
        for l in 0..n {
            for j in 0..n {
                lowered[(l, j)] = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
            }
        }
        *a_i = &g_inv * lowered;
    }
    Ok(out)
}

/// `max_i ‖∂_i M − A_iᵀ M − M A_i‖_F`: the defect of metric compatibility.
pub fn compatibility_residual(conn: &ConnectionField, metric: &MetricField, x: &[f64], chart: &ChartDomain) -> Result<f64> {
    chart.check_interior(x)?;
    if conn.fibre_dim() != metric.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            found: conn.fibre_dim(),
        });
    }
    let m = metric.evaluate(x);
    let dm = metric.derivatives(x, chart.default_step());
    let a = conn.coefficients(x);
    Ok(a.iter()
        .zip(&dm)
        .map(|(a_i, dm_i)| (dm_i - a_i.transpose() * &m - &m * a_i).norm())
        .fold(0.0, f64::max))
}

/// Grid supremum of `max_i ‖A_i − B_i‖_F` over the chart interior.
pub fn c0_connection_distance(a: &ConnectionField, b: &ConnectionField, chart: &ChartDomain, grid: usize) -> Result<f64> {
    if a.fibre_dim() != b.fibre_dim() || a.base_dim() != b.base_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.fibre_dim(),
            found: b.fibre_dim(),
        });
    }
    let points = chart.grid(grid)?;
    Ok(points
        .par_iter()
        .map(|x| {
            let ca = a.coefficients(x);
            let cb = b.coefficients(x);
            ca.iter()
                .zip(&cb)
                .map(|(p, q)| (p - q).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// Grid supremum of `‖M_a − M_b‖_F` plus grid supremum of `max_i ‖∂_i M_a − ∂_i M_b‖_F`.
pub fn c1_metric_distance(a: &MetricField, b: &MetricField, chart: &ChartDomain, grid: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let points = chart.grid(grid)?;
    let step = chart.default_step();
    let (c0, c1) = points
        .par_iter()
        .map(|x| {
            let value = (a.evaluate(x) - b.evaluate(x)).norm();
            let da = a.derivatives(x, step);
            let db = b.derivatives(x, step);
            let deriv = da
                .iter()
                .zip(&db)
                .map(|(p, q)| (p - q).norm())
                .fold(0.0, f64::max);
            (value, deriv)
        })
        .reduce(|| (0.0, 0.0), |l, r| (l.0.max(r.0), l.1.max(r.1)));
    Ok(c0 + c1)
}

/// `F_ij = ∂_i A_j − ∂_j A_i + [A_i, A_j]` by central differences of the
/// coefficient field.
pub fn curvature(conn: &ConnectionField, x: &[f64], step: f64, chart: &ChartDomain) -> Result<Vec<Vec<Matrix>>> {
    chart.check_interior(x)?;
    let n = conn.base_dim();
    let a = conn.coefficients(x);
    let da = central_differences(x, step, |p| conn.coefficients(p));
    let mut f = vec![vec![Matrix::zeros(conn.fibre_dim(), conn.fibre_dim()); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                f[i][j] = &da[i][j] - &da[j][i] + &a[i] * &a[j] - &a[j] * &a[i];
            }
        }
    }
    Ok(f)
}
