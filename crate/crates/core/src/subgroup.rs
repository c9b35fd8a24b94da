//! Closed connected subgroups of `SO(l)`, conjugacy search, and the order
//! `[A] ≤ [B]` on conjugacy classes.
//!
//! Subgroups are compared through their Lie algebras: `[A] ≤ [B]` holds when
//! some `U ∈ SO(l)` maps the algebra of `A` into the algebra of `B` under
//! `X ↦ U X Uᵀ`.

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::standard_complex_structure;
use crate::linalg::{
    adjoint, commutator, expm, frobenius_inner, nearest_rotation, orthonormalize, plane_generator,
    principal_log, random_rotation, skew_basis, so_residual, Matrix,
};

pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_DESCENT_ITERS: usize = 500;

/// Relative singular-value cutoff for the numerical rank of a source list.
const RANK_TOL: f64 = 1e-8;

/// Extra structure that defines group membership beyond the algebra.
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Trivial,
    /// Rotations of the `(i, j)` coordinate plane, identity elsewhere.
    Plane { i: usize, j: usize },
    Full,
    /// Rotations commuting with the complex structure `J`.
    Unitary { j: Matrix },
    /// Unitary with complex determinant 1.
    SpecialUnitary { j: Matrix },
    /// Given only by its algebra; membership is tested through the log.
    Algebra,
}

/// A closed connected subgroup of `SO(l)`, possibly conjugated by `frame`:
/// the group is `frame · H₀ · frameᵀ` where `H₀` is described by `structure`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupSpec {
    pub id: String,
    pub ambient_dim: usize,
    /// Frobenius-orthonormal skew matrices.
    pub algebra_basis: Vec<Matrix>,
    pub structure: Structure,
    pub frame: Matrix,
}

impl SubgroupSpec {
    fn standard(id: impl Into<String>, l: usize, basis: Vec<Matrix>, structure: Structure) -> Self {
        Self {
            id: id.into(),
            ambient_dim: l,
            algebra_basis: basis,
            structure,
            frame: Matrix::identity(l, l),
        }
    }

    pub fn trivial(l: usize) -> Self {
        Self::standard("trivial", l, Vec::new(), Structure::Trivial)
    }

    /// `SO(2)` acting on the `(i, j)` coordinate plane.
    pub fn plane_rotations(l: usize, i: usize, j: usize) -> Self {
        let id = if (i, j) == (0, 1) {
            "so2_block".to_string()
        } else {
            format!("so2_block_{i}{j}")
        };
        let g = plane_generator(l, i, j) * std::f64::consts::FRAC_1_SQRT_2;
        Self::standard(id, l, vec![g], Structure::Plane { i, j })
    }

    pub fn special_orthogonal(l: usize) -> Self {
        Self::standard(format!("so{l}"), l, skew_basis(l), Structure::Full)
    }

    /// `U(m) ⊂ SO(2m)` for the complex structure `J`.
    pub fn unitary(j: &Matrix) -> Self {
        let l = j.nrows();
        Self::standard(format!("u{}", l / 2), l, unitary_basis(j), Structure::Unitary { j: j.clone() })
    }

    /// `SU(m) ⊂ U(m)`: additionally Frobenius-orthogonal to `J`.
    pub fn special_unitary(j: &Matrix) -> Self {
        let l = j.nrows();
        let jn = j / j.norm();
        let mut items = vec![jn.clone()];
        items.extend(unitary_basis(j));
        let mut basis = orthonormalize(&items, 1e-10);
        basis.remove(0);
        Self::standard(format!("su{}", l / 2), l, basis, Structure::SpecialUnitary { j: j.clone() })
    }

    /// A subgroup known only through an orthonormal algebra basis.
    pub fn from_algebra(id: impl Into<String>, l: usize, basis: &[Matrix]) -> Self {
        Self::standard(id, l, orthonormalize(basis, 1e-10), Structure::Algebra)
    }

    pub fn group_dim(&self) -> usize {
        self.algebra_basis.len()
    }

    /// The conjugate subgroup `V H Vᵀ`.
    pub fn conjugated(&self, v: &Matrix) -> Self {
        Self {
            id: format!("{}^V", self.id),
            ambient_dim: self.ambient_dim,
            algebra_basis: self.algebra_basis.iter().map(|b| adjoint(v, b)).collect(),
            structure: self.structure.clone(),
            frame: v * &self.frame,
        }
    }

    /// Orthogonal projection onto the algebra.
    pub fn project(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.ambient_dim, self.ambient_dim);
        for b in &self.algebra_basis {
            out += b * frobenius_inner(x, b);
        }
        out
    }

    /// Residual of `a` belonging to the group; zero iff it does.
    pub fn membership(&self, a: &Matrix) -> f64 {
        let l = self.ambient_dim;
        let id = Matrix::identity(l, l);
        let local = self.frame.transpose() * a * &self.frame;
        let base = so_residual(&local, &id);
        base + match &self.structure {
            Structure::Trivial => (&local - &id).norm(),
            Structure::Full => 0.0,
            Structure::Plane { i, j } => {
                let mut expected = id.clone();
                for &r in &[*i, *j] {
                    for &c in &[*i, *j] {
                        expected[(r, c)] = local[(r, c)];
                    }
                }
                (&local - expected).norm()
            }
            Structure::Unitary { j } => commutator(&local, j).norm(),
            Structure::SpecialUnitary { j } => {
                commutator(&local, j).norm() + (complex_determinant(&local, j) - Complex::new(1.0, 0.0)).norm()
            }
            Structure::Algebra => match principal_log(&local, 1e-13) {
                Ok(log) => (&log - self.project_local(&log)).norm(),
                Err(_) => f64::INFINITY,
            },
        }
    }

    fn project_local(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.ambient_dim, self.ambient_dim);
        for b in &self.algebra_basis {
            let b_local = self.frame.transpose() * b * &self.frame;
            out += &b_local * frobenius_inner(x, &b_local);
        }
        out
    }

    /// `√(Σ_s ‖Ad_U s − Π(Ad_U s)‖²)`.
    pub fn containment_residual(&self, source: &[Matrix], u: &Matrix) -> f64 {
        source
            .iter()
            .map(|s| {
                let y = adjoint(u, s);
                (&y - self.project(&y)).norm_squared()
            })
            .fold(0.0, |a, b| a + b)
            .sqrt()
    }
}

/// Skew matrices commuting with `J`, from projecting `so(l)` by `X ↦ (X + JᵀXJ)/2`.
fn unitary_basis(j: &Matrix) -> Vec<Matrix> {
    let l = j.nrows();
    let projected: Vec<Matrix> = skew_basis(l)
        .iter()
        .map(|x| (x + j.transpose() * x * j) * 0.5)
        .collect();
    orthonormalize(&projected, 1e-10)
}

/// Determinant of `A` read as an `m×m` complex matrix through `J`, which must
/// be the standard structure `[[0, −I], [I, 0]]` in the group's local frame.
fn complex_determinant(a: &Matrix, j: &Matrix) -> Complex<f64> {
    let m = j.nrows() / 2;
    let c = nalgebra::DMatrix::from_fn(m, m, |r, s| Complex::new(a[(r, s)], a[(m + r, s)]));
    c.determinant()
}

/// Catalog of standard subgroups of `SO(l)` for `l ∈ {2, 3, 4}`, ordered by
/// group dimension. For `l = 2`, `SO(2)` appears once, as `so2_block`.
pub fn catalog(l: usize) -> Result<Vec<SubgroupSpec>> {
    if !(2..=4).contains(&l) {
        return Err(Error::UnsupportedDimension(l));
    }
    let mut out = vec![SubgroupSpec::trivial(l), SubgroupSpec::plane_rotations(l, 0, 1)];
    if l > 2 {
        if l.is_multiple_of(2) {
            let j = standard_complex_structure(l / 2);
            out.push(SubgroupSpec::special_unitary(&j));
            out.push(SubgroupSpec::unitary(&j));
        }
        out.push(SubgroupSpec::special_orthogonal(l));
    }
    Ok(out)
}

pub fn catalog_entry(l: usize, id: &str) -> Result<SubgroupSpec> {
    catalog(l)?
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::UnknownSubgroup { id: id.to_string(), dim: l })
}

/// Outcome of an `[A] ≤ [B]` test. When `holds`, `Ad_witness` maps the algebra
/// of `A` into that of `B` up to `residual`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderVerdict {
    pub holds: bool,
    #[serde(skip)]
    pub witness: Matrix,
    pub residual: f64,
    pub restarts_used: usize,
}

fn singular_values(source: &[Matrix]) -> Vec<f64> {
    if source.is_empty() {
        return Vec::new();
    }
    let l2 = source[0].len();
    let stacked = Matrix::from_fn(source.len(), l2, |r, c| source[r][c]);
    let mut sv: Vec<f64> = stacked.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Minimizes `f(U) = Σ_s ‖Ad_U s − Π_target(Ad_U s)‖²` over `SO(l)`.
///
/// Sources whose numerical rank exceeds the target dimension short-circuit to
/// `holds = false` with the Eckart–Young lower bound as residual. Otherwise
/// `U = I` is tried first, then `restarts` seeded random rotations, each
/// refined by damped Gauss–Newton steps along geodesics `U ← U exp(G)`.
pub fn conjugacy_search(source: &[Matrix], target: &SubgroupSpec, restarts: usize, tol: f64, seed: u64) -> OrderVerdict {
    let l = target.ambient_dim;
    let id = Matrix::identity(l, l);
    let sv = singular_values(source);
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * top.max(1e-300) && s > 1e-14).count();
    if rank > target.group_dim() {
        let bound = sv[target.group_dim()..].iter().map(|s| s * s).fold(0.0, |a, b| a + b).sqrt();
        return OrderVerdict {
            holds: false,
            witness: id,
            residual: bound,
            restarts_used: 0,
        };
    }
    let at_identity = target.containment_residual(source, &id);
    if at_identity < tol {
        return OrderVerdict {
            holds: true,
            witness: id,
            residual: at_identity,
            restarts_used: 0,
        };
    }
    let best = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                id.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64));
                random_rotation(&mut rng, l)
            };
            let u = descend(source, target, start, tol);
            let res = target.containment_residual(source, &u);
            (res, r, u)
        })
        .reduce_with(|a, b| if (b.0, b.1) < (a.0, a.1) { b } else { a })
        .expect("at least one restart");
    OrderVerdict {
        holds: best.0 < tol,
        witness: best.2,
        residual: best.0,
        restarts_used: restarts.max(1),
    }
}

/// Residual vector and Jacobian with respect to `U ← U exp(Σ δ_a E_a)`.
fn residual_and_jacobian(source: &[Matrix], target: &SubgroupSpec, u: &Matrix, dirs: &[Matrix]) -> (Vec<f64>, Matrix) {
    let l2 = target.ambient_dim * target.ambient_dim;
    let mut r = Vec::with_capacity(source.len() * l2);
    let mut jac = Matrix::zeros(source.len() * l2, dirs.len());
    for (si, s) in source.iter().enumerate() {
        let y = adjoint(u, s);
        let res = &y - target.project(&y);
        r.extend(res.iter().copied());
        for (a, e) in dirs.iter().enumerate() {
            let dy = adjoint(u, &commutator(e, s));
            let d = &dy - target.project(&dy);
            for (idx, v) in d.iter().enumerate() {
                jac[(si * l2 + idx, a)] = *v;
            }
        }
    }
    (r, jac)
}

fn descend(source: &[Matrix], target: &SubgroupSpec, start: Matrix, tol: f64) -> Matrix {
    let l = target.ambient_dim;
    let dirs = skew_basis(l);
    let mut u = start;
    let mut lambda = 1e-3;
    let (mut r, mut jac) = residual_and_jacobian(source, target, &u, &dirs);
    let mut f: f64 = r.iter().map(|v| v * v).sum();
    let floor = (tol * 1e-4).powi(2);
    for _ in 0..MAX_DESCENT_ITERS {
        if f <= floor {
            break;
        }
        let rv = nalgebra::DVector::from_vec(r.clone());
        let grad = jac.transpose() * &rv;
        if grad.norm() < 1e-18 {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut accepted = false;
        for _ in 0..12 {
            let damped = &jtj + Matrix::identity(dirs.len(), dirs.len()) * (lambda * (1.0 + jtj.diagonal().amax()));
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let mut g = Matrix::zeros(l, l);
            for (a, e) in dirs.iter().enumerate() {
                g += e * step[a];
            }
            let candidate = nearest_rotation(&(&u * expm(&g)));
            let (r_new, jac_new) = residual_and_jacobian(source, target, &candidate, &dirs);
            let f_new: f64 = r_new.iter().map(|v| v * v).sum();
            if f_new < f {
                u = candidate;
                r = r_new;
                jac = jac_new;
                let improvement = f - f_new;
                f = f_new;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if improvement < 1e-32 {
                    return u;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    u
}

/// A conjugacy class, represented by a catalog subgroup or an estimated algebra.
#[derive(Debug, Clone)]
pub enum ConjugacyClass {
    Subgroup(SubgroupSpec),
    Algebra { id: String, ambient_dim: usize, basis: Vec<Matrix> },
}

impl ConjugacyClass {
    pub fn ambient_dim(&self) -> usize {
        match self {
            ConjugacyClass::Subgroup(s) => s.ambient_dim,
            ConjugacyClass::Algebra { ambient_dim, .. } => *ambient_dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis().len()
    }

    pub fn basis(&self) -> &[Matrix] {
        match self {
            ConjugacyClass::Subgroup(s) => &s.algebra_basis,
            ConjugacyClass::Algebra { basis, .. } => basis,
        }
    }

    pub fn as_spec(&self) -> SubgroupSpec {
        match self {
            ConjugacyClass::Subgroup(s) => s.clone(),
            ConjugacyClass::Algebra { id, ambient_dim, basis } => SubgroupSpec::from_algebra(id.clone(), *ambient_dim, basis),
        }
    }
}

/// `[a] ≤ [b]`: `dim a ≤ dim b` and a conjugator maps `a` into `b`.
pub fn leq(a: &ConjugacyClass, b: &ConjugacyClass, restarts: usize, tol: f64, seed: u64) -> Result<OrderVerdict> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.ambient_dim(),
            found: b.ambient_dim(),
        });
    }
    Ok(conjugacy_search(a.basis(), &b.as_spec(), restarts, tol, seed))
}

#[derive(Debug, Clone, Serialize)]
pub struct AntisymmetryReport {
    pub forward: OrderVerdict,
    pub backward: OrderVerdict,
    /// Both directions hold.
    pub instance: bool,
    pub dims_equal: bool,
    /// Residual of `Ad_g K ⊇ H`, i.e. the reverse containment under the forward witness.
    pub forward_equality_residual: f64,
    pub backward_equality_residual: f64,
    pub equality_verified: bool,
}

/// When `[K] ≤ [H]` and `[H] ≤ [K]`, checks that the witnesses give equality
/// `gKg⁻¹ = H` and `g'Hg'⁻¹ = K`, not just inclusion.
pub fn antisymmetry_check(k_spec: &SubgroupSpec, h_spec: &SubgroupSpec, restarts: usize, tol: f64, seed: u64) -> Result<AntisymmetryReport> {
    let k = ConjugacyClass::Subgroup(k_spec.clone());
    let h = ConjugacyClass::Subgroup(h_spec.clone());
    let forward = leq(&k, &h, restarts, tol, seed)?;
    let backward = leq(&h, &k, restarts, tol, seed.wrapping_add(1))?;
    let instance = forward.holds && backward.holds;
    let dims_equal = k_spec.group_dim() == h_spec.group_dim();
    // Ad_gᵀ(H) ⊆ K and Ad_g'ᵀ(K) ⊆ H complete the two equalities.
    let forward_equality_residual = k_spec.containment_residual(&h_spec.algebra_basis, &forward.witness.transpose());
    let backward_equality_residual = h_spec.containment_residual(&k_spec.algebra_basis, &backward.witness.transpose());
    let equality_verified = instance
        && dims_equal
        && forward.residual < tol
        && backward.residual < tol
        && forward_equality_residual < tol
        && backward_equality_residual < tol;
    Ok(AntisymmetryReport {
        forward,
        backward,
        instance,
        dims_equal,
        forward_equality_residual,
        backward_equality_residual,
        equality_verified,
    })
}
