//! Spatial inertia, pseudo-inertia on P(4), and the log-det adaptation law.
//!
//! The pseudo-inertia of a body with mass `m`, first moment `h = m c` and
//! rotational inertia `I_A` about the frame origin is
//!
//! ```text
//! L = [[S, h], [h^T, m]],   S = tr(I_A)/2 * I3 - I_A,
//! ```
//!
//! with inverse `I_A = tr(S) * I3 - S`. `L` is positive definite exactly when
//! the parameters are realizable by a positive mass density.

use nalgebra::{Cholesky, Matrix3, Matrix4, Matrix6, SMatrix, SVector, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::liegroup::{coad, hat3, Twist, Wrench};

const SYMMETRY_TOL: f64 = 1e-12;

/// Mass properties of one rigid body about its frame origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialInertia {
    mass: f64,
    first_moment: Vector3<f64>,
    rotational: Matrix3<f64>,
}

impl SpatialInertia {
    /// Validates `m > 0` and positive definiteness of the assembled 6x6 matrix.
    pub fn new(mass: f64, first_moment: Vector3<f64>, rotational: Matrix3<f64>) -> Result<Self> {
        let si = SpatialInertia {
            mass,
            first_moment,
            rotational,
        };
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("mass must be positive, got {mass}")));
        }
        let asym = (rotational - rotational.transpose()).abs().max();
        if asym > SYMMETRY_TOL * rotational.abs().max().max(1.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "rotational inertia is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        if Cholesky::new(si.matrix()).is_none() {
            return Err(Error::NotPositiveDefinite(
                "spatial inertia matrix is not positive definite".into(),
            ));
        }
        Ok(si)
    }

    /// Builds the inertia from a centre of mass and the inertia tensor about it.
    pub fn from_com(mass: f64, com: Vector3<f64>, inertia_at_com: Matrix3<f64>) -> Result<Self> {
        let c = hat3(&com);
        let rotational = inertia_at_com - c * c * mass;
        SpatialInertia::new(mass, com * mass, rotational)
    }

    pub(crate) fn from_parts_unchecked(
        mass: f64,
        first_moment: Vector3<f64>,
        rotational: Matrix3<f64>,
    ) -> Self {
        SpatialInertia {
            mass,
            first_moment,
            rotational,
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn first_moment(&self) -> Vector3<f64> {
        self.first_moment
    }

    pub fn rotational(&self) -> Matrix3<f64> {
        self.rotational
    }

    pub fn com(&self) -> Vector3<f64> {
        self.first_moment / self.mass
    }

    /// `[[I_A, h^], [h^^T, m I3]]`.
    pub fn matrix(&self) -> Matrix6<f64> {
        spatial_block(self.mass, &self.first_moment, &self.rotational)
    }

    /// `M x` without forming the 6x6 matrix.
    pub fn apply(&self, x: &Twist) -> Wrench {
        let (w, v) = (x.angular(), x.linear());
        let h = self.first_moment;
        Wrench::new(self.rotational * w + h.cross(&v), v * self.mass - h.cross(&w))
    }
}

fn spatial_block(mass: f64, h: &Vector3<f64>, rot: &Matrix3<f64>) -> Matrix6<f64> {
    let hh = hat3(h);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&hh);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&hh.transpose());
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * mass));
    m
}

/// A 4x4 symmetric positive definite pseudo-inertia.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoInertia(Matrix4<f64>);

impl PseudoInertia {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        if !m.iter().all(|x| x.is_finite()) || Cholesky::new(m).is_none() {
            return Err(Error::NotPositiveDefinite(
                "pseudo-inertia is not positive definite".into(),
            ));
        }
        Ok(PseudoInertia(m))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn mass(&self) -> f64 {
        self.0[(3, 3)]
    }

    pub fn eigenvalues(&self) -> SVector<f64, 4> {
        SymmetricEigen::new(self.0).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    fn cholesky(&self) -> Cholesky<f64, nalgebra::U4> {
        // Positive definiteness is a type invariant.
        Cholesky::new(self.0).expect("pseudo-inertia lost positive definiteness")
    }

    pub fn inverse(&self) -> Matrix4<f64> {
        self.cholesky().inverse()
    }
}

fn check_symmetric(m: &Matrix4<f64>) -> Result<()> {
    let scale = m.abs().max().max(1.0);
    let asym = (m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

/// Linear map from a symmetric 4x4 matrix to its 6x6 spatial-inertia image.
///
/// On positive definite inputs this is `from_pseudo(L).matrix()`; it is also
/// defined for arbitrary symmetric matrices, which the regressor needs.
pub fn spatial_from_symmetric(l: &Matrix4<f64>) -> Matrix6<f64> {
    let sigma = l.fixed_view::<3, 3>(0, 0).into_owned();
    let h = l.fixed_view::<3, 1>(0, 3).into_owned();
    let rot = Matrix3::identity() * sigma.trace() - sigma;
    spatial_block(l[(3, 3)], &h, &rot)
}

pub fn to_pseudo(m: &SpatialInertia) -> Result<PseudoInertia> {
    let rot = m.rotational();
    let sigma = Matrix3::identity() * (0.5 * rot.trace()) - rot;
    let mut l = Matrix4::zeros();
    l.fixed_view_mut::<3, 3>(0, 0).copy_from(&sigma);
    l.fixed_view_mut::<3, 1>(0, 3).copy_from(&m.first_moment());
    l.fixed_view_mut::<1, 3>(3, 0).copy_from(&m.first_moment().transpose());
    l[(3, 3)] = m.mass();
    PseudoInertia::new(l).map_err(|_| {
        Error::PhysicalInconsistency(format!(
            "pseudo-inertia of body with mass {} is not positive definite",
            m.mass()
        ))
    })
}

pub fn from_pseudo(l: &PseudoInertia) -> SpatialInertia {
    let m = l.matrix();
    let sigma = m.fixed_view::<3, 3>(0, 0).into_owned();
    SpatialInertia::from_parts_unchecked(
        m[(3, 3)],
        m.fixed_view::<3, 1>(0, 3).into_owned(),
        Matrix3::identity() * sigma.trace() - sigma,
    )
}

/// Validating variant of [`from_pseudo`] for raw matrices.
pub fn from_pseudo_matrix(m: &Matrix4<f64>) -> Result<SpatialInertia> {
    Ok(from_pseudo(&PseudoInertia::new(*m)?))
}

/// Affine-invariant inner product `tr(L^-1 X L^-1 Y) / 2`.
pub fn metric_inner(l: &PseudoInertia, x: &Matrix4<f64>, y: &Matrix4<f64>) -> f64 {
    let li = l.inverse();
    0.5 * (li * x * li * y).trace()
}

pub fn metric_norm_sq(l: &PseudoInertia, x: &Matrix4<f64>) -> f64 {
    metric_inner(l, x, x)
}

/// Eigenvalues of `B^-1 A` for positive definite `A`, `B`.
fn relative_eigenvalues(a: &PseudoInertia, b: &PseudoInertia) -> SVector<f64, 4> {
    let g = b.cholesky();
    let gl = g.l();
    let gi = gl.try_inverse().expect("triangular factor of SPD matrix is invertible");
    let s = gi * a.matrix() * gi.transpose();
    SymmetricEigen::new((s + s.transpose()) * 0.5).eigenvalues
}

/// Eigenvalues of `Lhat^-1 L`.
pub fn estimate_ratio_eigenvalues(l: &PseudoInertia, lhat: &PseudoInertia) -> SVector<f64, 4> {
    relative_eigenvalues(l, lhat)
}

/// `phi(x) = -log x + x - 1`.
pub fn phi(x: f64) -> f64 {
    -x.ln() + x - 1.0
}

/// Largest `x >= 1` with `phi(x) = y`.
pub fn phi_inverse_upper(y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    // phi is increasing on [1, inf); bracket then bisect.
    let mut hi = 2.0;
    while phi(hi) < y {
        hi *= 2.0;
    }
    let mut lo = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// Log-det Bregman divergence `gamma (log|Lhat|/|L| + tr(Lhat^-1 L) - 4)`.
pub fn bregman_divergence(l: &PseudoInertia, lhat: &PseudoInertia, gamma: f64) -> f64 {
    let log_det = |p: &PseudoInertia| 2.0 * p.cholesky().l().diagonal().map(f64::ln).sum();
    let tr = (lhat.inverse() * l.matrix()).trace();
    gamma * (log_det(lhat) - log_det(l) + tr - 4.0)
}

/// Same divergence as `gamma * sum_j phi(lambda_j)`, `lambda_j` the eigenvalues of `Lhat^-1 L`.
pub fn bregman_divergence_eigen(l: &PseudoInertia, lhat: &PseudoInertia, gamma: f64) -> f64 {
    gamma * estimate_ratio_eigenvalues(l, lhat).iter().map(|&x| phi(x)).sum::<f64>()
}

/// Riemannian distance `|log(L^-1/2 Lhat L^-1/2)|_F`.
pub fn geodesic_distance(l: &PseudoInertia, lhat: &PseudoInertia) -> f64 {
    relative_eigenvalues(lhat, l)
        .iter()
        .map(|x| x.ln().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Symmetric 4x4 matrix `R` with `tr(L R)` equal to a power that is linear in `L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetricRegressor(Matrix4<f64>);

impl SymmetricRegressor {
    pub fn zero() -> Self {
        SymmetricRegressor(Matrix4::zeros())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    /// `tr(L R)`.
    pub fn pair(&self, l: &Matrix4<f64>) -> f64 {
        (l * self.0).trace()
    }
}

fn symmetric_basis() -> [Matrix4<f64>; 10] {
    let mut out = [Matrix4::zeros(); 10];
    let mut k = 0;
    for i in 0..4 {
        for j in i..4 {
            out[k][(i, j)] = 1.0;
            out[k][(j, i)] = 1.0;
            k += 1;
        }
    }
    out
}

/// Regressor of `v_err^T (M a_ref - coad(v_body, M v_ref))` in the pseudo-inertia.
///
/// The power is evaluated on a basis of Sym(4) through the linear extension of
/// `from_pseudo`, then the Gram system `tr(E_k R) = s_k` is solved for `R`.
pub fn regressor(v_err: &Twist, v_ref: &Twist, a_ref: &Twist, v_body: &Twist) -> Result<SymmetricRegressor> {
    let basis = symmetric_basis();
    let mut gram = SMatrix::<f64, 10, 10>::zeros();
    let mut rhs = SVector::<f64, 10>::zeros();
    for (k, ek) in basis.iter().enumerate() {
        let m = spatial_from_symmetric(ek);
        let momentum = Wrench(m * v_ref.0);
        let w = Wrench(m * a_ref.0) - coad(v_body, &momentum);
        rhs[k] = w.power(v_err);
        for (l, el) in basis.iter().enumerate() {
            gram[(k, l)] = (ek * el).trace();
        }
    }
    let coeffs = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("regressor basis system".into()))?;
    let r = basis
        .iter()
        .zip(coeffs.iter())
        .fold(Matrix4::zeros(), |acc, (e, c)| acc + e * *c);
    Ok(SymmetricRegressor(r))
}

/// Gains of the log-det adaptation law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptationConfig {
    /// Single adaptation gain shared by every body.
    pub gamma: f64,
    /// Leakage toward the nominal pseudo-inertia. Not given with the
    /// reference gain set; 0.1 is this crate's default.
    pub sigma: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            gamma: 8.0e4,
            sigma: 0.1,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::validation("adaptation.gamma", "must be positive"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::validation("adaptation.sigma", "must be non-negative"));
        }
        Ok(())
    }

    /// `Lhat R Lhat / gamma - sigma (Lhat - L0)`.
    pub fn flow(&self, lhat: &PseudoInertia, reg: &SymmetricRegressor, nominal: &PseudoInertia) -> Matrix4<f64> {
        let l = lhat.matrix();
        l * reg.matrix() * l / self.gamma - (l - nominal.matrix()) * self.sigma
    }
}

fn sym_expm(s: &Matrix4<f64>) -> Matrix4<f64> {
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(f64::exp));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// One step of the adaptation flow through the retraction
/// `G expm(G^-1 (dt Ldot) G^-T) G^T`, `G` the Cholesky factor of `lhat`.
pub fn adapt_step(
    lhat: &PseudoInertia,
    reg: &SymmetricRegressor,
    cfg: &AdaptationConfig,
    nominal: &PseudoInertia,
    dt: f64,
) -> Result<PseudoInertia> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let step = cfg.flow(lhat, reg, nominal) * dt;
    let g = lhat.cholesky().l();
    let gi = g.try_inverse().expect("triangular factor of SPD matrix is invertible");
    let next = g * sym_expm(&(gi * step * gi.transpose())) * g.transpose();
    PseudoInertia::new((next + next.transpose()) * 0.5)
}
