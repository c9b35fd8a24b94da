//! Built-in metric families `k ↦ g_k` with their limits.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Complex;

use super::{ChartDomain, MetricField};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const BUILTIN_FAMILIES: [&str; 5] = [
    "poincare2d",
    "flat",
    "product4d",
    "sheared_poincare",
    "fubini_study_chart",
];

pub type FamilyParams = BTreeMap<String, f64>;

type MemberFn = dyn Fn(u32) -> MetricField + Send + Sync;

/// A sequence of metrics `g_k` on a common chart converging to `limit`.
#[derive(Clone)]
pub struct MetricFamily {
    pub name: String,
    pub chart: ChartDomain,
    pub basepoint: Vec<f64>,
    /// Complex structure `J` preserved by every member, when there is one.
    pub complex_structure: Option<Matrix>,
    member: Arc<MemberFn>,
    limit: MetricField,
}

impl std::fmt::Debug for MetricFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricFamily")
            .field("name", &self.name)
            .field("chart", &self.chart)
            .field("basepoint", &self.basepoint)
            .finish()
    }
}

impl MetricFamily {
    pub fn member(&self, k: u32) -> Result<MetricField> {
        if k == 0 {
            return Err(Error::InvalidArgument("family members are indexed from k = 1".into()));
        }
        Ok((self.member)(k))
    }

    pub fn limit(&self) -> &MetricField {
        &self.limit
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// A family whose members all equal `metric`.
    pub fn constant(name: impl Into<String>, metric: MetricField, chart: ChartDomain, basepoint: Vec<f64>) -> Self {
        let m = metric.clone();
        Self {
            name: name.into(),
            chart,
            basepoint,
            complex_structure: None,
            member: Arc::new(move |_| m.clone()),
            limit: metric,
        }
    }
}

/// Looks up a built-in family by name.
///
/// Parameters: `flat` takes `dim` (default 2) and `scale` (default 4);
/// `sheared_poincare` takes `shear` (default 0.5) and `theta_inf` (default 0.6).
/// The other families take none. Unknown parameters are rejected.
pub fn builtin_family(name: &str, params: &FamilyParams) -> Result<MetricFamily> {
    match name {
        "poincare2d" => {
            check_params(name, params, &[])?;
            Ok(poincare2d())
        }
        "flat" => {
            check_params(name, params, &["dim", "scale"])?;
            let dim = param(params, "dim", 2.0);
            let scale = param(params, "scale", 4.0);
            if dim.fract() != 0.0 || !(1.0..=8.0).contains(&dim) {
                return Err(Error::FamilyParameter(format!("flat: dim must be an integer in 1..=8, got {dim}")));
            }
            if !(scale > 0.0) {
                return Err(Error::FamilyParameter(format!("flat: scale must be positive, got {scale}")));
            }
            let dim = dim as usize;
            let metric = MetricField::constant("flat", Matrix::identity(dim, dim) * scale);
            let chart = ChartDomain::cube(dim, 0.5, 0.05)?;
            Ok(MetricFamily::constant("flat", metric, chart, vec![0.0; dim]))
        }
        "product4d" => {
            check_params(name, params, &[])?;
            Ok(product4d())
        }
        "sheared_poincare" => {
            check_params(name, params, &["shear", "theta_inf"])?;
            let shear = param(params, "shear", 0.5);
            let theta_inf = param(params, "theta_inf", 0.6);
            if !shear.is_finite() || shear.abs() > 1.0 {
                return Err(Error::FamilyParameter(format!("sheared_poincare: |shear| must be at most 1, got {shear}")));
            }
            if !theta_inf.is_finite() {
                return Err(Error::FamilyParameter("sheared_poincare: theta_inf must be finite".into()));
            }
            Ok(sheared_poincare(shear, theta_inf))
        }
        "fubini_study_chart" => {
            check_params(name, params, &[])?;
            Ok(fubini_study_chart())
        }
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

fn check_params(name: &str, params: &FamilyParams, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::FamilyParameter(format!(
                "{name}: unknown parameter `{key}` (allowed: {allowed:?})"
            )));
        }
    }
    Ok(())
}

fn param(params: &FamilyParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Conformal factor `4/(1 − r²/k²)²` of the scaled Poincaré disk and its gradient.
fn poincare_factor(x: f64, y: f64, k: f64) -> (f64, [f64; 2]) {
    let k2 = k * k;
    let u = 1.0 - (x * x + y * y) / k2;
    let f = 4.0 / (u * u);
    let d = 16.0 / (k2 * u * u * u);
    (f, [d * x, d * y])
}

fn poincare_member(k: u32) -> MetricField {
    let kf = k as f64;
    MetricField::new(format!("poincare2d[k={k}]"), 2, move |p| {
        let (f, _) = poincare_factor(p[0], p[1], kf);
        Matrix::identity(2, 2) * f
    })
    .with_derivative(move |p| {
        let (_, df) = poincare_factor(p[0], p[1], kf);
        df.iter().map(|d| Matrix::identity(2, 2) * *d).collect()
    })
}

fn poincare2d() -> MetricFamily {
    let chart = ChartDomain::cube(2, 0.5, 0.05)
        .and_then(|c| c.with_ball(0.5))
        .expect("static chart");
    MetricFamily {
        name: "poincare2d".into(),
        chart,
        basepoint: vec![0.05, 0.0],
        complex_structure: None,
        member: Arc::new(poincare_member),
        limit: MetricField::constant("poincare2d[limit]", Matrix::identity(2, 2) * 4.0),
    }
}

fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows() + b.nrows();
    let mut m = Matrix::zeros(n, n);
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    m
}

fn product4d() -> MetricFamily {
    let chart = ChartDomain::cube(4, 0.35, 0.03).expect("static chart");
    let member = move |k: u32| {
        let kf = k as f64;
        let id2 = Matrix::identity(2, 2);
        let zero2 = Matrix::zeros(2, 2);
        let (id_a, id_b, z_b) = (id2.clone(), id2.clone(), zero2.clone());
        MetricField::new(format!("product4d[k={k}]"), 4, move |p| {
            let (f, _) = poincare_factor(p[0], p[1], kf);
            block_diag(&(&id_a * f), &id_a)
        })
        .with_derivative(move |p| {
            let (_, df) = poincare_factor(p[0], p[1], kf);
            vec![
                block_diag(&(&id_b * df[0]), &z_b),
                block_diag(&(&id_b * df[1]), &z_b),
                Matrix::zeros(4, 4),
                Matrix::zeros(4, 4),
            ]
        })
    };
    MetricFamily {
        name: "product4d".into(),
        chart,
        basepoint: vec![0.05, 0.0, 0.1, 0.0],
        complex_structure: None,
        member: Arc::new(member),
        limit: MetricField::constant(
            "product4d[limit]",
            block_diag(&(Matrix::identity(2, 2) * 4.0), &Matrix::identity(2, 2)),
        ),
    }
}

/// Rotation about the axis `(1,1,1)/√3` by `theta` (Rodrigues).
fn diagonal_axis_rotation(theta: f64) -> Matrix {
    let a = 1.0 / 3f64.sqrt();
    let k = Matrix::from_row_slice(3, 3, &[0.0, -a, a, a, 0.0, -a, -a, a, 0.0]);
    Matrix::identity(3, 3) + &k * theta.sin() + &k * &k * (1.0 - theta.cos())
}

/// `L_k = R(θ_k) S` with `θ_k = θ_∞ + 1/k`; `θ_∞` for `k = None`.
fn sheared_map(shear: f64, theta_inf: f64, k: Option<u32>) -> Matrix {
    let theta = theta_inf + k.map_or(0.0, |k| 1.0 / k as f64);
    let s = Matrix::from_row_slice(3, 3, &[1.0, shear, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    diagonal_axis_rotation(theta) * s
}

/// Poincaré disk times a flat line, pulled back by `x ↦ L_k x`:
/// `g_k(x) = L_kᵀ G_k(L_k x) L_k`.
fn sheared_poincare(shear: f64, theta_inf: f64) -> MetricFamily {
    let chart = ChartDomain::cube(3, 0.3, 0.03).expect("static chart");
    let member = move |k: u32| {
        let kf = k as f64;
        let l = sheared_map(shear, theta_inf, Some(k));
        let l2 = l.clone();
        MetricField::new(format!("sheared_poincare[k={k}]"), 3, move |p| {
            let y = &l * nalgebra::DVector::from_column_slice(p);
            let (f, _) = poincare_factor(y[0], y[1], kf);
            let g = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![f, f, 1.0]));
            l.transpose() * g * &l
        })
        .with_derivative(move |p| {
            let y = &l2 * nalgebra::DVector::from_column_slice(p);
            let (_, df) = poincare_factor(y[0], y[1], kf);
            (0..3)
                .map(|i| {
                    // ∂_{x_i} G(Lx) = Σ_j L_{ji} ∂_{y_j} G
                    let d = l2[(0, i)] * df[0] + l2[(1, i)] * df[1];
                    let dg = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![d, d, 0.0]));
                    l2.transpose() * dg * &l2
                })
                .collect()
        })
    };
    let l_inf = sheared_map(shear, theta_inf, None);
    let g_inf = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 4.0, 1.0]));
    MetricFamily {
        name: "sheared_poincare".into(),
        chart,
        basepoint: vec![0.05, 0.02, 0.0],
        complex_structure: None,
        member: Arc::new(member),
        limit: MetricField::constant("sheared_poincare[limit]", l_inf.transpose() * g_inf * &l_inf),
    }
}

/// Standard complex structure on `R^{2m}` with coordinates ordered
/// `(x_1..x_m, y_1..y_m)`, `z_a = x_a + i y_a`: `J = [[0, −I], [I, 0]]`.
pub fn standard_complex_structure(m: usize) -> Matrix {
    let mut j = Matrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        j[(a, m + a)] = -1.0;
        j[(m + a, a)] = 1.0;
    }
    j
}

type CMatrix = nalgebra::DMatrix<Complex<f64>>;

/// Real symmetric form `Re(uᴴ H v)` of a Hermitian `H` in `(x, y)` ordering.
fn realify(h: &CMatrix) -> Matrix {
    let m = h.nrows();
    let mut g = Matrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        for b in 0..m {
            let z = h[(a, b)];
            g[(a, b)] = z.re;
            g[(a, m + b)] = -z.im;
            g[(m + a, b)] = z.im;
            g[(m + a, m + b)] = z.re;
        }
    }
    g
}

/// Fubini–Study metric of `CP²` with radius `k` on the affine chart `C²`:
/// `H = I/s − z zᴴ/(k² s²)`, `s = 1 + |z|²/k²`, and its real-coordinate derivatives.
fn fubini_study(p: &[f64], k: f64) -> (Matrix, Vec<Matrix>) {
    let m = 2;
    let z = nalgebra::DVector::from_fn(m, |a, _| Complex::new(p[a], p[m + a]));
    let k2 = k * k;
    let r2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let s = 1.0 + r2 / k2;
    let id = CMatrix::identity(m, m);
    let zz = &z * z.adjoint();
    let h = &id * Complex::from(1.0 / s) - &zz * Complex::from(1.0 / (k2 * s * s));
    let mut derivs = Vec::with_capacity(2 * m);
    for coord in 0..2 * m {
        let a = coord % m;
        let imaginary = coord >= m;
        let mut dz = nalgebra::DVector::from_element(m, Complex::new(0.0, 0.0));
        dz[a] = if imaginary { Complex::i() } else { Complex::from(1.0) };
        let ds = 2.0 * p[coord] / k2;
        let dzz = &dz * z.adjoint() + &z * dz.adjoint();
        let dh = &id * Complex::from(-ds / (s * s)) - dzz * Complex::from(1.0 / (k2 * s * s))
            + &zz * Complex::from(2.0 * ds / (k2 * s * s * s));
        derivs.push(realify(&dh));
    }
    (realify(&h), derivs)
}

fn fubini_study_chart() -> MetricFamily {
    let chart = ChartDomain::cube(4, 0.4, 0.04).expect("static chart");
    let member = |k: u32| {
        let kf = k as f64;
        MetricField::new(format!("fubini_study_chart[k={k}]"), 4, move |p| fubini_study(p, kf).0)
            .with_derivative(move |p| fubini_study(p, kf).1)
    };
    MetricFamily {
        name: "fubini_study_chart".into(),
        chart,
        basepoint: vec![0.1, 0.0, 0.05, 0.0],
        complex_structure: Some(standard_complex_structure(2)),
        member: Arc::new(member),
        limit: MetricField::constant("fubini_study_chart[limit]", Matrix::identity(4, 4)),
    }
}
