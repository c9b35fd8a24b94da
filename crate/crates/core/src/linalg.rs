//! Dense small-matrix primitives.
//!
//! Everything here works on `l×l` real matrices with `l` in the single digits:
//! representing endomorphisms of bilinear forms, symmetric square roots, the
//! nonstandard embedding `A ↦ W⁻¹AW` of `SO(l)` into the rotation group of
//! another form, and logs/exps near the identity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative asymmetry accepted by [`BilinearForm::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A symmetric bilinear form given by its representing matrix in a fixed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearForm {
    matrix: Matrix,
}

impl BilinearForm {
    /// Wraps a symmetric matrix. The stored matrix is exactly symmetrized.
    pub fn new(matrix: Matrix) -> Result<Self> {
        check_square(&matrix)?;
        check_finite(&matrix, "bilinear form")?;
        let asym = asymmetry(&matrix);
        if asym > SYMMETRY_TOL * matrix.amax().max(1.0) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(Self {
            matrix: symmetrize(&matrix),
        })
    }

    /// Wraps a symmetric positive-definite matrix (a metric at a point).
    pub fn metric(matrix: Matrix) -> Result<Self> {
        let form = Self::new(matrix)?;
        if !form.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(form)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Matrix::identity(dim, dim),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Q(x, y) = xᵀ M_Q y`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += x[i] * self.matrix[(i, j)] * y[j];
            }
        }
        acc
    }

    pub fn is_positive_definite(&self) -> bool {
        self.matrix.clone().cholesky().is_some()
    }
}

/// Returns `Z_Q` with `g(X, Z_Q Y) = Q(X, Y)`, i.e. `M_g⁻¹ M_Q`.
pub fn representing_endomorphism(q: &BilinearForm, g: &BilinearForm) -> Result<Matrix> {
    if q.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: q.dim(),
        });
    }
    let chol = g.matrix().clone().cholesky().ok_or(Error::Singular)?;
    Ok(chol.solve(q.matrix()))
}

/// Operator norm of `z` induced by the metric `g`: `sup ‖Zv‖_g / ‖v‖_g`.
///
/// Computed as the largest singular value of `W_g Z W_g⁻¹` with `W_g` the
/// symmetric square root of `M_g`.
pub fn operator_norm(z: &Matrix, g: &BilinearForm) -> Result<f64> {
    if z.nrows() != g.dim() || z.ncols() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: z.nrows(),
        });
    }
    let (w, w_inv) = spd_sqrt_pair(g.matrix())?;
    Ok(spectral_norm(&(w * z * w_inv)))
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtMethod {
    /// Binomial series of `√(1+c)` around the identity; needs `‖Z − I‖ < 1`.
    PowerSeries,
    /// Spectral decomposition; any symmetric positive-definite input.
    Eigen,
}

/// Hard cap on power-series terms; reached only for `‖Z − I‖` within ~1e-6 of 1.
const MAX_SERIES_TERMS: usize = 2_000_000;

/// Symmetric positive-definite square root of a symmetric positive-definite `z`.
///
/// The power series `Σ binom(1/2, n)(Z − I)ⁿ` is truncated at the first `N`
/// with `r^{N+1}/(1 − r) < tol`, `r = ‖Z − I‖₂`. Since `|binom(1/2, n)| ≤ 1`
/// that bounds the discarded tail.
pub fn sym_sqrt(z: &Matrix, method: SqrtMethod, tol: f64) -> Result<Matrix> {
    let form = BilinearForm::new(z.clone())?;
    let z = form.matrix();
    match method {
        SqrtMethod::Eigen => spd_sqrt_pair(z).map(|(w, _)| w),
        SqrtMethod::PowerSeries => {
            let n = z.nrows();
            let x = z - Matrix::identity(n, n);
            let r = spectral_norm(&x);
            if r >= 1.0 {
                return Err(Error::Domain(format!(
                    "power-series square root needs ‖Z − I‖ < 1, got {r}"
                )));
            }
            if r == 0.0 {
                return Ok(Matrix::identity(n, n));
            }
            let terms = series_terms(r, tol)?;
            let mut sum = Matrix::identity(n, n);
            let mut power = Matrix::identity(n, n);
            let mut coeff = 1.0;
            for k in 1..=terms {
                coeff *= (0.5 - (k as f64 - 1.0)) / k as f64;
                power = &power * &x;
                sum += &power * coeff;
            }
            Ok(symmetrize(&sum))
        }
    }
}

/// Smallest `N` with `r^{N+1} / (1 − r) < tol`.
fn series_terms(r: f64, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut bound = r / (1.0 - r);
    let mut n = 0;
    while bound >= tol {
        n += 1;
        bound *= r;
        if n > MAX_SERIES_TERMS {
            return Err(Error::Domain(format!(
                "series with ratio {r} needs more than {MAX_SERIES_TERMS} terms"
            )));
        }
    }
    Ok(n)
}

/// Symmetric square root and its inverse by eigendecomposition.
pub fn spd_sqrt_pair(m: &Matrix) -> Result<(Matrix, Matrix)> {
    check_square(m)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let v = &eig.eigenvectors;
    let sqrt = eig.eigenvalues.map(f64::sqrt);
    let w = v * Matrix::from_diagonal(&sqrt) * v.transpose();
    let w_inv = v * Matrix::from_diagonal(&sqrt.map(|s| 1.0 / s)) * v.transpose();
    Ok((symmetrize(&w), symmetrize(&w_inv)))
}

/// Positively oriented orthonormal frame for the metric `m`: the columns of
/// `M^{-1/2}` satisfy `FᵀMF = I`.
pub fn orthonormal_frame(m: &BilinearForm) -> Result<Matrix> {
    spd_sqrt_pair(m.matrix()).map(|(_, inv)| inv)
}

/// The data of the nonstandard embedding `SO(l) → SO(l)_h`.
///
/// `form` is expressed in a basis that is orthonormal for the reference
/// metric, so its representing endomorphism is its matrix.
#[derive(Debug, Clone)]
pub struct NonstandardFrame {
    pub form: BilinearForm,
    pub sqrt: Matrix,
    pub sqrt_inverse: Matrix,
}

impl NonstandardFrame {
    pub fn new(form: BilinearForm, method: SqrtMethod, tol: f64) -> Result<Self> {
        let sqrt = sym_sqrt(form.matrix(), method, tol)?;
        let sqrt_inverse = sqrt
            .clone()
            .try_inverse()
            .ok_or(Error::Singular)?;
        Ok(Self {
            form,
            sqrt,
            sqrt_inverse,
        })
    }

    /// Builds the frame for `h` relative to the reference metric `g`, after
    /// moving both to the `g`-orthonormal basis `M_g^{-1/2}`.
    pub fn relative_to(h: &BilinearForm, g: &BilinearForm, method: SqrtMethod, tol: f64) -> Result<Self> {
        let frame = orthonormal_frame(g)?;
        let transformed = frame.transpose() * h.matrix() * &frame;
        Self::new(BilinearForm::metric(transformed)?, method, tol)
    }

    /// `A ↦ W⁻¹ A W`; sends `SO(l)` into `SO(l)_h`.
    pub fn embed(&self, a: &Matrix) -> Matrix {
        &self.sqrt_inverse * a * &self.sqrt
    }

    /// `A ↦ W A W⁻¹`.
    pub fn unembed(&self, a: &Matrix) -> Matrix {
        &self.sqrt * a * &self.sqrt_inverse
    }
}

/// `‖AᵀMA − M‖_F + |det A − 1|`; zero exactly on `SO(l)_h`.
pub fn so_residual(a: &Matrix, m: &Matrix) -> f64 {
    let defect = a.transpose() * m * a - m;
    defect.norm() + (a.determinant() - 1.0).abs()
}

/// Matrix exponential by scaling and squaring of the Taylor series.
pub fn expm(x: &Matrix) -> Matrix {
    let n = x.nrows();
    let norm = x.norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let y = x / 2f64.powi(squarings);
    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..40 {
        term = &term * &y / k as f64;
        sum += &term;
        if term.norm() <= f64::EPSILON * 1e-3 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Principal logarithm for `‖A − I‖₂ < 1`.
///
/// Takes Denman–Beavers square roots until `‖A − I‖₂ ≤ 1/4`, then sums the
/// Mercator series `Σ (−1)^{n+1} Xⁿ/n` and rescales.
pub fn principal_log(a: &Matrix, tol: f64) -> Result<Matrix> {
    check_square(a)?;
    check_finite(a, "log argument")?;
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let r0 = spectral_norm(&(a - &id));
    if r0 >= 1.0 {
        return Err(Error::Domain(format!(
            "principal log needs ‖A − I‖ < 1, got {r0}"
        )));
    }
    let mut b = a.clone();
    let mut halvings = 0;
    let mut r = r0;
    while r > 0.25 {
        b = denman_beavers_sqrt(&b)?;
        halvings += 1;
        r = spectral_norm(&(&b - &id));
    }
    let x = &b - &id;
    let target = tol / 2f64.powi(halvings);
    let mut sum = Matrix::zeros(n, n);
    let mut power = id.clone();
    let mut k = 1usize;
    loop {
        power = &power * &x;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += &power * (sign / k as f64);
        let tail = r.powi(k as i32 + 1) / ((k + 1) as f64 * (1.0 - r));
        if tail < target || r == 0.0 || k > 400 {
            break;
        }
        k += 1;
    }
    Ok(sum * 2f64.powi(halvings))
}

fn denman_beavers_sqrt(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = Matrix::identity(n, n);
    for _ in 0..60 {
        let y_inv = y.clone().try_inverse().ok_or(Error::Singular)?;
        let z_inv = z.clone().try_inverse().ok_or(Error::Singular)?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let change = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if change <= 1e-16 * y.norm() {
            break;
        }
    }
    Ok(y)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn skew_part(m: &Matrix) -> Matrix {
    (m - m.transpose()) * 0.5
}

pub fn asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).amax()
}

pub fn commutator(a: &Matrix, b: &Matrix) -> Matrix {
    a * b - b * a
}

pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> f64 {
    a.dot(b)
}

/// `Ad_U(X) = U X Uᵀ` for orthogonal `U`.
pub fn adjoint(u: &Matrix, x: &Matrix) -> Matrix {
    u * x * u.transpose()
}

/// Nearest rotation in Frobenius norm (polar factor, determinant forced to +1).
pub fn nearest_rotation(m: &Matrix) -> Matrix {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut r = &u * &v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let last = u.ncols() - 1;
        u.column_mut(last).neg_mut();
        r = u * v_t;
    }
    r
}

/// Haar-distributed rotation from Gaussian QR with sign correction.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, l: usize) -> Matrix {
    let g = Matrix::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..l {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Orthonormal basis of `so(l)`: `(e_i e_jᵀ − e_j e_iᵀ)/√2` for `i < j`.
pub fn skew_basis(l: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(l * l.saturating_sub(1) / 2);
    for i in 0..l {
        for j in (i + 1)..l {
            out.push(plane_generator(l, i, j) * std::f64::consts::FRAC_1_SQRT_2);
        }
    }
    out
}

/// `e_j e_iᵀ − e_i e_jᵀ`: the generator of rotation from axis `i` towards axis `j`.
pub fn plane_generator(l: usize, i: usize, j: usize) -> Matrix {
    let mut m = Matrix::zeros(l, l);
    m[(j, i)] = 1.0;
    m[(i, j)] = -1.0;
    m
}

/// Gram–Schmidt in the Frobenius inner product, dropping vectors whose
/// remainder falls below `drop_tol`.
pub fn orthonormalize(items: &[Matrix], drop_tol: f64) -> Vec<Matrix> {
    let mut basis: Vec<Matrix> = Vec::new();
    for item in items {
        let mut v = item.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = frobenius_inner(&v, b);
                v -= b * c;
            }
        }
        let norm = v.norm();
        if norm > drop_tol {
            basis.push(v / norm);
        }
    }
    basis
}

pub(crate) fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
