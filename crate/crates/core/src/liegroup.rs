//! SE(3) and so(3) primitives.
//!
//! Twists are ordered `(angular, linear)` and wrenches `(moment, force)`.
//! Every 6x6 operator in this module uses the matching block layout, so the
//! adjoint of a pose `(R, p)` is `[[R, 0], [p^ R, R]]` and the Lie-algebra
//! adjoint of a twist `(w, v)` is `[[w^, 0], [v^, w^]]`.
//!
//! The co-adjoint is fixed by the pairing `<coad(x, f), y> = <f, [x, y]>`,
//! which makes it `ad(x)^T f`.
//!
//! `bernoulli_operator(eta)` is `sum_n (-1)^n B_n / n! ad(eta)^n` with
//! `B_1 = -1/2`, i.e. `I + ad/2 + ad^2/12 - ...`. With `e = exp(eta)` this is
//! the map from the body velocity `e^-1 de/dt` to `d(eta)/dt`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

/// Tolerance on `trace(R) + 1` below which the SO(3) logarithm is refused.
pub const INJECTIVITY_TOL: f64 = 1e-9;

/// Structural tolerance used when checking hat-form inputs.
pub const STRUCTURE_TOL: f64 = 1e-9;

/// Default truncation order of the Bernoulli series.
pub const DEFAULT_BERNOULLI_ORDER: usize = 8;

const SMALL_ANGLE: f64 = 1e-4;
const NEAR_PI: f64 = 0.1;

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Checks orthonormality and `det = +1` to `1e-10`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::MalformedElement("rotation has non-finite entries".into()));
        }
        let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
        if orth > 1e-10 {
            return Err(Error::MalformedElement(format!(
                "rotation is not orthogonal (|R^T R - I| = {orth:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(Error::MalformedElement(format!("rotation determinant is {det}")));
        }
        Ok(Rotation(m))
    }

    pub fn about_axis(axis: &Vector3<f64>, angle: f64) -> Self {
        exp_so3(&(axis.normalize() * angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let s = 0.5 * vee_antisym(&self.0).norm();
        s.atan2(c)
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Rigid transform `(R, p)`, an element of SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(p: Vector3<f64>) -> Self {
        Pose::new(Rotation::identity(), p)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Accepts a 4x4 homogeneous matrix whose last row is `(0, 0, 0, 1)`.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        let last = m.fixed_view::<1, 4>(3, 0);
        let expected = nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0);
        if (last - expected).abs().max() > STRUCTURE_TOL {
            return Err(Error::MalformedElement(
                "homogeneous matrix last row must be (0, 0, 0, 1)".into(),
            ));
        }
        let r = Rotation::from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Pose::new(r, m.fixed_view::<3, 1>(0, 3).into_owned()))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.inverse();
        Pose::new(rt, -(rt.matrix() * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * p + self.translation
    }

    pub fn adjoint(&self) -> Matrix6<f64> {
        adjoint(self)
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation.matrix() * rhs.translation + self.translation,
        )
    }
}

macro_rules! six_vector {
    ($name:ident, $first:ident, $second:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Default)]
        pub struct $name(pub Vector6<f64>);

        impl $name {
            pub fn new($first: Vector3<f64>, $second: Vector3<f64>) -> Self {
                let mut v = Vector6::zeros();
                v.fixed_rows_mut::<3>(0).copy_from(&$first);
                v.fixed_rows_mut::<3>(3).copy_from(&$second);
                $name(v)
            }

            pub fn zero() -> Self {
                $name(Vector6::zeros())
            }

            pub fn from_slice(s: &[f64; 6]) -> Self {
                $name(Vector6::from_column_slice(s))
            }

            pub fn $first(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(0).into_owned()
            }

            pub fn $second(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(3).into_owned()
            }

            pub fn as_vector(&self) -> &Vector6<f64> {
                &self.0
            }

            pub fn norm(&self) -> f64 {
                self.0.norm()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }
        }

        impl From<Vector6<f64>> for $name {
            fn from(v: Vector6<f64>) -> Self {
                $name(v)
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: $name) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl SubAssign for $name {
            fn sub_assign(&mut self, rhs: $name) {
                self.0 -= rhs.0;
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                $name(self.0 * rhs)
            }
        }

        impl Mul<$name> for Matrix6<f64> {
            type Output = Vector6<f64>;
            fn mul(self, rhs: $name) -> Vector6<f64> {
                self * rhs.0
            }
        }
    };
}

six_vector!(Twist, angular, linear);
six_vector!(Wrench, moment, force);

impl Wrench {
    /// Power delivered by this wrench along a twist.
    pub fn power(&self, twist: &Twist) -> f64 {
        self.0.dot(&twist.0)
    }
}

/// Skew matrix with `hat3(w) * u = w x u`.
pub fn hat3(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee_antisym(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

pub fn vee3(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let asym = (m + m.transpose()).abs().max();
    if asym > STRUCTURE_TOL {
        return Err(Error::MalformedElement(format!(
            "matrix is not antisymmetric (|M + M^T| = {asym:.3e})"
        )));
    }
    Ok(0.5 * vee_antisym(m))
}

pub fn hat6(x: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&x.angular()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&x.linear());
    m
}

pub fn vee6(m: &Matrix4<f64>) -> Result<Twist> {
    let last_row = m.fixed_view::<1, 4>(3, 0).abs().max();
    if last_row > STRUCTURE_TOL {
        return Err(Error::MalformedElement(format!(
            "se(3) element must have a zero last row (max |entry| = {last_row:.3e})"
        )));
    }
    let w = vee3(&m.fixed_view::<3, 3>(0, 0).into_owned())?;
    Ok(Twist::new(w, m.fixed_view::<3, 1>(0, 3).into_owned()))
}

/// Rodrigues' formula.
pub fn exp_so3(w: &Vector3<f64>) -> Rotation {
    let theta = w.norm();
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let k = hat3(w);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Inverse of [`exp_so3`] on rotations with angle below `pi`.
pub fn log_so3(r: &Rotation) -> Result<Vector3<f64>> {
    let m = r.matrix();
    let tr = m.trace();
    if !tr.is_finite() || tr <= -1.0 + INJECTIVITY_TOL {
        return Err(Error::InjectivityRadius { trace: tr });
    }
    let c = ((tr - 1.0) * 0.5).clamp(-1.0, 1.0);
    let axis2s = vee_antisym(m);
    let s = 0.5 * axis2s.norm();
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        // theta / sin(theta) ~ 1 + theta^2 / 6
        return Ok(axis2s * (0.5 * (1.0 + theta * theta / 6.0)));
    }
    if theta < PI - NEAR_PI {
        return Ok(axis2s * (0.5 * theta / theta.sin()));
    }

    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part, pivoting on its largest diagonal entry.
    let sym = (m + m.transpose()) * 0.5;
    let b = (sym - Matrix3::identity() * c) / (1.0 - c);
    let k = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap_or(0);
    let ak = b[(k, k)].max(0.0).sqrt();
    let mut axis = Vector3::zeros();
    for j in 0..3 {
        axis[j] = if j == k { ak } else { b[(j, k)] / ak };
    }
    axis.normalize_mut();
    if axis.dot(&axis2s) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Left Jacobian of SO(3).
pub fn left_jacobian_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let (b, c) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let k = hat3(w);
    Matrix3::identity() + k * b + k * k * c
}

/// Inverse of [`left_jacobian_so3`].
pub fn left_jacobian_so3_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let k = hat3(w);
    Matrix3::identity() - k * 0.5 + k * k * c
}

pub fn exp_se3(x: &Twist) -> Pose {
    let w = x.angular();
    Pose::new(exp_so3(&w), left_jacobian_so3(&w) * x.linear())
}

pub fn log_se3(t: &Pose) -> Result<Twist> {
    let w = log_so3(&t.rotation)?;
    Ok(Twist::new(w, left_jacobian_so3_inv(&w) * t.translation))
}

/// `[[R, 0], [p^ R, R]]`.
pub fn adjoint(t: &Pose) -> Matrix6<f64> {
    let r = t.rotation.matrix();
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(hat3(&t.translation) * r));
    m
}

/// Transports a twist by `Ad_T`.
pub fn transform_twist(t: &Pose, x: &Twist) -> Twist {
    let r = t.rotation.matrix();
    let w = r * x.angular();
    let v = r * x.linear() + t.translation.cross(&w);
    Twist::new(w, v)
}

/// `Ad_T^T f`, the dual transport of a wrench.
pub fn transform_wrench_dual(t: &Pose, f: &Wrench) -> Wrench {
    let rt = t.rotation.matrix().transpose();
    let force = f.force();
    let moment = rt * (f.moment() + force.cross(&t.translation));
    Wrench::new(moment, rt * force)
}

/// `[[w^, 0], [v^, w^]]`.
pub fn ad(x: &Twist) -> Matrix6<f64> {
    let wh = hat3(&x.angular());
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&wh);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&wh);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&hat3(&x.linear()));
    m
}

pub fn bracket(x: &Twist, y: &Twist) -> Twist {
    let (w1, v1) = (x.angular(), x.linear());
    let (w2, v2) = (y.angular(), y.linear());
    Twist::new(w1.cross(&w2), w1.cross(&v2) - w2.cross(&v1))
}

/// `ad(x)^T f`.
pub fn coad(x: &Twist, f: &Wrench) -> Wrench {
    let (w, v) = (x.angular(), x.linear());
    let (m, force) = (f.moment(), f.force());
    Wrench::new(m.cross(&w) + force.cross(&v), force.cross(&w))
}

/// Bernoulli numbers `B_0..=B_n` with `B_1 = -1/2`.
pub fn bernoulli_numbers(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    for m in 1..=n {
        // B_m = -1/(m+1) * sum_{k<m} C(m+1, k) B_k
        let mut binom = 1.0;
        let mut acc = 0.0;
        for (k, bk) in b.iter().enumerate().take(m) {
            acc += binom * bk;
            binom = binom * (m + 1 - k) as f64 / (k + 1) as f64;
        }
        b[m] = -acc / (m + 1) as f64;
    }
    // exact zeros for odd indices above one
    for (m, bm) in b.iter_mut().enumerate() {
        if m > 1 && m % 2 == 1 {
            *bm = 0.0;
        }
    }
    b
}

/// Truncated series `sum_{n=0}^{order} (-1)^n B_n / n! ad(eta)^n`.
pub fn bernoulli_operator(eta: &Twist, order: usize) -> Result<Matrix6<f64>> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!(
            "Bernoulli truncation order must be >= 2, got {order}"
        )));
    }
    let norm = eta.angular().norm();
    if !norm.is_finite() || norm >= 2.0 * PI {
        return Err(Error::DivergenceRisk { norm });
    }
    let b = bernoulli_numbers(order);
    let ad_eta = ad(eta);
    let mut out = Matrix6::identity();
    let mut power = Matrix6::identity();
    let mut factorial = 1.0;
    for (n, bn) in b.iter().enumerate().skip(1) {
        power = ad_eta * power;
        factorial *= n as f64;
        if *bn != 0.0 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            out += power * (sign * bn / factorial);
        }
    }
    Ok(out)
}
