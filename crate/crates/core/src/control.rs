//! Modular geometric control, its adaptive variant and a geometric PD baseline.
//!
//! The chain is split into rigid-body modules and joint modules. Each body
//! tracks a required velocity built from its local log error, each joint
//! tracks the required joint velocity that makes adjacent bodies consistent,
//! and the two are composed into one torque per joint.

use nalgebra::{DVector, Matrix6};

use crate::error::{Error, Result};
use crate::inertia::{adapt_step, from_pseudo, regressor, to_pseudo, PseudoInertia, SpatialInertia, SymmetricRegressor};
use crate::kindyn;
use crate::liegroup::{bernoulli_operator, bracket, coad, log_se3, transform_twist, transform_wrench_dual, Pose, Twist, Wrench};
use crate::model::{BaselineGains, ChainModel, ControllerKind, GainSet};

/// Local configuration error of one body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyError {
    /// `e = T_d^{-1} T`.
    pub e: Pose,
    /// `eta = log(e)`.
    pub eta: Twist,
    /// `V_e = Ad_{e^{-1}} V_d - V`.
    pub v_err: Twist,
    /// `psi = eta^T K_z eta / 2`.
    pub psi: f64,
}

/// `e = desired^{-1} actual`, its logarithm and configuration energy.
pub fn config_error(desired: &Pose, actual: &Pose, k_z: &Matrix6<f64>) -> Result<BodyError> {
    let e = desired.inverse() * *actual;
    let eta = log_se3(&e)?;
    let psi = 0.5 * eta.as_vector().dot(&(k_z * eta.as_vector()));
    Ok(BodyError {
        e,
        eta,
        v_err: Twist::zero(),
        psi,
    })
}

pub fn velocity_error(e: &Pose, v_desired: &Twist, v_actual: &Twist) -> Twist {
    transform_twist(&e.inverse(), v_desired) - *v_actual
}

/// `V_r = Ad_{e^{-1}} V_d - Gamma eta`.
pub fn required_velocity(e: &Pose, v_desired: &Twist, eta: &Twist, gamma: &Matrix6<f64>) -> Twist {
    transform_twist(&e.inverse(), v_desired) - Twist(gamma * eta.0)
}

/// Time derivative of [`required_velocity`]:
/// `A_r = Ad_{e^{-1}} A_d + [V_e, Ad_{e^{-1}} V_d] + Gamma B(eta) V_e`.
///
/// Since `e^{-1} de/dt = -V_e`, the log error moves as `d eta/dt = -B(eta) V_e`,
/// which fixes the sign of the last term.
pub fn required_acceleration(
    e: &Pose,
    a_desired: &Twist,
    v_desired: &Twist,
    v_err: &Twist,
    eta: &Twist,
    gamma: &Matrix6<f64>,
    order: usize,
) -> Result<Twist> {
    let e_inv = e.inverse();
    let b = bernoulli_operator(eta, order)?;
    Ok(transform_twist(&e_inv, a_desired)
        + bracket(v_err, &transform_twist(&e_inv, v_desired))
        + Twist(gamma * (b * v_err.0)))
}

/// Per-body required wrench,
/// `F_r = M A_r - coad(V, M V_r) + K_v (V_r - V) + Ad^T_{T_{i,i+1}^{-1}} F_r_next`.
pub fn required_wrench(
    inertia: &SpatialInertia,
    k_v: &Matrix6<f64>,
    v_req: &Twist,
    a_req: &Twist,
    v_actual: &Twist,
    to_child: Option<(&Pose, &Wrench)>,
) -> Wrench {
    let mut f = inertia.apply(a_req) - coad(v_actual, &inertia.apply(v_req)) + Wrench(k_v * (*v_req - *v_actual).0);
    if let Some((local_child, f_next)) = to_child {
        f += transform_wrench_dual(&local_child.inverse(), f_next);
    }
    f
}

/// Backward pass of [`required_wrench`] over the chain with a free tip.
pub fn required_wrenches(
    inertias: &[SpatialInertia],
    k_v: &Matrix6<f64>,
    locals: &[Pose],
    v_req: &[Twist],
    a_req: &[Twist],
    v_actual: &[Twist],
) -> Vec<Wrench> {
    let n = inertias.len();
    let mut out = vec![Wrench::zero(); n];
    for i in (0..n).rev() {
        let child = if i + 1 < n { Some((&locals[i + 1], &out[i + 1])) } else { None };
        let f = required_wrench(&inertias[i], k_v, &v_req[i], &a_req[i], &v_actual[i], child);
        out[i] = f;
    }
    out
}

/// Required wrenches with estimated inertias, plus the regressor that drives
/// each estimate.
pub fn required_wrenches_adaptive(
    estimates: &[PseudoInertia],
    k_v: &Matrix6<f64>,
    locals: &[Pose],
    v_req: &[Twist],
    a_req: &[Twist],
    v_actual: &[Twist],
) -> Result<(Vec<Wrench>, Vec<SymmetricRegressor>)> {
    let inertias: Vec<SpatialInertia> = estimates.iter().map(from_pseudo).collect();
    let f = required_wrenches(&inertias, k_v, locals, v_req, a_req, v_actual);
    let regs = (0..estimates.len())
        .map(|i| regressor(&(v_req[i] - v_actual[i]), &v_req[i], &a_req[i], &v_actual[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok((f, regs))
}

/// Least-squares solution of `xi q_r = V_r - Ad_{T^{-1}} V_r_parent` and its residual norm.
pub fn required_joint_velocity(v_req: &Twist, v_req_parent: &Twist, local: &Pose, xi: &Twist) -> (f64, f64) {
    let r = *v_req - transform_twist(&local.inverse(), v_req_parent);
    let q = xi.0.dot(&r.0) / xi.0.norm_squared();
    (q, (r - *xi * q).norm())
}

/// `J_r = I_m q_ddot_r + k_a (q_dot_r - q_dot)`.
pub fn required_joint_action(theta_ddot_req: f64, theta_dot_req: f64, theta_dot: f64, rotor_inertia: f64, k_a: f64) -> f64 {
    rotor_inertia * theta_ddot_req + k_a * (theta_dot_req - theta_dot)
}

/// `tau_r = xi^T F_r + J_r`.
pub fn joint_command(xi: &Twist, f_req: &Wrench, joint_action: f64) -> f64 {
    f_req.power(xi) + joint_action
}

/// Virtual power flow `(V_r - V)^T (F_r - F)`.
pub fn vpf(v_req: &Twist, v_actual: &Twist, f_req: &Wrench, f_actual: &Wrench) -> f64 {
    (*f_req - *f_actual).power(&(*v_req - *v_actual))
}

/// `(V_r - V)^T M (V_r - V) / 2 + psi`.
pub fn lyapunov_body(v_req: &Twist, v_actual: &Twist, inertia: &SpatialInertia, psi: f64) -> f64 {
    let s = *v_req - *v_actual;
    0.5 * inertia.apply(&s).power(&s) + psi
}

pub fn lyapunov_joint(theta_dot_req: f64, theta_dot: f64, rotor_inertia: f64) -> f64 {
    let d = theta_dot_req - theta_dot;
    0.5 * rotor_inertia * d * d
}

/// Geometric PD on the tool frame, mapped to joint torques through the body
/// Jacobian, plus gravity compensation from `model`.
///
/// The wrench is the exact negative gradient of `eta^T K eta / 2`,
/// `-B(eta)^T K eta`, minus damping on the velocity error.
pub fn baseline_pd(
    model: &ChainModel,
    theta: &[f64],
    theta_dot: &[f64],
    desired: &Pose,
    v_desired: &Twist,
    gains: &BaselineGains,
    order: usize,
) -> Result<(DVector<f64>, Wrench)> {
    let actual = kindyn::end_effector(model, theta);
    let e = desired.inverse() * actual;
    let eta = log_se3(&e)?;
    let jac = kindyn::body_jacobian(model, theta);
    let v = Twist::from(jac.fixed_rows::<6>(0) * DVector::from_column_slice(theta_dot));
    let v_err = velocity_error(&e, v_desired, &v);
    let w = baseline_wrench(&eta, &v_err, gains, order)?;
    let n = model.dof();
    let gravity = kindyn::inverse_dynamics(model, theta, &vec![0.0; n], &vec![0.0; n], &Wrench::zero());
    Ok((jac.transpose() * w.0 + gravity, w))
}

/// `-B(eta)^T K eta + K_d V_e`, with `V_e` the velocity error.
pub fn baseline_wrench(eta: &Twist, v_err: &Twist, gains: &BaselineGains, order: usize) -> Result<Wrench> {
    let b = bernoulli_operator(eta, order)?;
    Ok(Wrench(-(b.transpose() * (gains.stiffness * eta.0)) + gains.damping * v_err.0))
}

/// Desired per-body poses, velocities and accelerations from joint references.
/// The accelerations include gravity, like the plant's.
#[derive(Clone, Debug)]
pub struct DesiredBodies {
    pub locals: Vec<Pose>,
    pub poses: Vec<Pose>,
    pub velocities: Vec<Twist>,
    pub accelerations: Vec<Twist>,
}

pub fn desired_bodies(model: &ChainModel, theta: &[f64], theta_dot: &[f64], theta_ddot: &[f64]) -> DesiredBodies {
    let locals = kindyn::local_transforms(model, theta);
    let poses = kindyn::accumulate(&locals);
    let velocities = kindyn::body_velocities_with(model, &locals, theta_dot, Twist::zero());
    let accelerations = kindyn::body_accelerations_with(
        model,
        &locals,
        &velocities,
        theta_dot,
        theta_ddot,
        kindyn::gravity_base_accel(model),
    );
    DesiredBodies {
        locals,
        poses,
        velocities,
        accelerations,
    }
}

/// Everything one control update produces.
#[derive(Clone, Debug)]
pub struct ControlOutput {
    pub tau: DVector<f64>,
    pub locals: Vec<Pose>,
    pub poses: Vec<Pose>,
    pub velocities: Vec<Twist>,
    pub errors: Vec<BodyError>,
    pub v_req: Vec<Twist>,
    pub a_req: Vec<Twist>,
    pub f_req: Vec<Wrench>,
    pub theta_dot_req: DVector<f64>,
    pub theta_ddot_req: DVector<f64>,
    /// Residual of the joint-velocity least squares, per joint.
    pub residuals: DVector<f64>,
    pub regressors: Vec<SymmetricRegressor>,
}

/// Stateful controller: the pure law plus adaptation and derivative-filter state.
#[derive(Clone, Debug)]
pub struct Controller {
    pub kind: ControllerKind,
    /// The controller's own (possibly wrong) model of the plant.
    pub model: ChainModel,
    pub gains: GainSet,
    pub dt: f64,
    pub order: usize,
    /// When false the estimates stay at their initial value.
    pub adaptation_enabled: bool,
    alpha: f64,
    estimates: Vec<PseudoInertia>,
    nominal: Vec<PseudoInertia>,
    prev_theta_dot_req: Option<DVector<f64>>,
    filtered: DVector<f64>,
}

impl Controller {
    pub fn new(kind: ControllerKind, model: ChainModel, gains: GainSet, dt: f64, cutoff_hz: f64, order: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("control period must be positive, got {dt}")));
        }
        gains.validate(model.dof())?;
        let nominal = model
            .bodies
            .iter()
            .map(|b| to_pseudo(&b.inertia))
            .collect::<Result<Vec<_>>>()?;
        let n = model.dof();
        let tau_f = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
        Ok(Controller {
            kind,
            model,
            gains,
            dt,
            order,
            adaptation_enabled: kind == ControllerKind::Amgc,
            alpha: dt / (dt + tau_f),
            estimates: nominal.clone(),
            nominal,
            prev_theta_dot_req: None,
            filtered: DVector::zeros(n),
        })
    }

    pub fn estimates(&self) -> &[PseudoInertia] {
        &self.estimates
    }

    pub fn set_estimates(&mut self, estimates: Vec<PseudoInertia>) {
        assert_eq!(estimates.len(), self.model.dof());
        self.estimates = estimates;
    }

    /// Evaluates the control law without touching internal state.
    pub fn compute(
        &self,
        theta: &[f64],
        theta_dot: &[f64],
        desired: &DesiredBodies,
    ) -> Result<ControlOutput> {
        let model = &self.model;
        let n = model.dof();
        let locals = kindyn::local_transforms(model, theta);
        let poses = kindyn::accumulate(&locals);
        let velocities = kindyn::body_velocities_with(model, &locals, theta_dot, Twist::zero());

        let mut errors = Vec::with_capacity(n);
        let mut v_req = Vec::with_capacity(n);
        let mut a_req = Vec::with_capacity(n);
        for i in 0..n {
            let mut err = config_error(&desired.poses[i], &poses[i], &self.gains.k_z[i])?;
            err.v_err = velocity_error(&err.e, &desired.velocities[i], &velocities[i]);
            let g = &self.gains.gamma[i];
            v_req.push(required_velocity(&err.e, &desired.velocities[i], &err.eta, g));
            a_req.push(required_acceleration(
                &err.e,
                &desired.accelerations[i],
                &desired.velocities[i],
                &err.v_err,
                &err.eta,
                g,
                self.order,
            )?);
            errors.push(err);
        }

        let mut theta_dot_req = DVector::zeros(n);
        let mut residuals = DVector::zeros(n);
        for i in 0..n {
            let parent = if i == 0 { Twist::zero() } else { v_req[i - 1] };
            let (q, r) = required_joint_velocity(&v_req[i], &parent, &locals[i], &model.bodies[i].screw_axis);
            theta_dot_req[i] = q;
            residuals[i] = r;
        }
        let raw_derivative = match &self.prev_theta_dot_req {
            Some(prev) => (&theta_dot_req - prev) / self.dt,
            None => DVector::zeros(n),
        };
        let theta_ddot_req = &self.filtered + (&raw_derivative - &self.filtered) * self.alpha;

        let (f_req, regressors, tau) = match self.kind {
            ControllerKind::Mgc | ControllerKind::Amgc => {
                let (f_req, regressors) = if self.kind == ControllerKind::Amgc {
                    required_wrenches_adaptive(&self.estimates, &self.gains.k_v, &locals, &v_req, &a_req, &velocities)?
                } else {
                    let inertias: Vec<SpatialInertia> = model.bodies.iter().map(|b| b.inertia).collect();
                    (
                        required_wrenches(&inertias, &self.gains.k_v, &locals, &v_req, &a_req, &velocities),
                        Vec::new(),
                    )
                };
                let tau = DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        let b = &model.bodies[i];
                        let action = required_joint_action(
                            theta_ddot_req[i],
                            theta_dot_req[i],
                            theta_dot[i],
                            b.rotor_inertia,
                            self.gains.k_a[i],
                        );
                        joint_command(&b.screw_axis, &f_req[i], action)
                    }),
                );
                (f_req, regressors, tau)
            }
            ControllerKind::BaselinePd => {
                let ee_desired = desired.poses[n - 1] * model.tool;
                let v_ee_desired = transform_twist(&model.tool.inverse(), &desired.velocities[n - 1]);
                let (tau, _) = baseline_pd(
                    model,
                    theta,
                    theta_dot,
                    &ee_desired,
                    &v_ee_desired,
                    &self.gains.baseline,
                    self.order,
                )?;
                (vec![Wrench::zero(); n], Vec::new(), tau)
            }
        };

        Ok(ControlOutput {
            tau,
            locals,
            poses,
            velocities,
            errors,
            v_req,
            a_req,
            f_req,
            theta_dot_req,
            theta_ddot_req,
            residuals,
            regressors,
        })
    }

    /// Advances the derivative filter and, for the adaptive law, the estimates.
    pub fn commit(&mut self, out: &ControlOutput) -> Result<()> {
        self.filtered = out.theta_ddot_req.clone();
        self.prev_theta_dot_req = Some(out.theta_dot_req.clone());
        if self.kind == ControllerKind::Amgc && self.adaptation_enabled {
            for (i, reg) in out.regressors.iter().enumerate() {
                self.estimates[i] = adapt_step(&self.estimates[i], reg, &self.gains.adaptation, &self.nominal[i], self.dt)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::exp_se3;
    use nalgebra::Vector3;

    #[test]
    fn zero_error_config() {
        let p = exp_se3(&Twist::from_slice(&[0.1, 0.2, -0.3, 1.0, 0.0, 2.0]));
        let err = config_error(&p, &p, &Matrix6::identity()).unwrap();
        assert!(err.eta.norm() < 1e-12);
        assert!(err.psi.abs() < 1e-24);
    }

    #[test]
    fn translation_error_is_rotated_offset() {
        let rd = exp_se3(&Twist::from_slice(&[0.0, 0.0, 0.7, 0.0, 0.0, 0.0]));
        let d = Vector3::new(0.3, -0.2, 0.5);
        let actual = Pose::new(rd.rotation, rd.translation + d);
        let err = config_error(&rd, &actual, &Matrix6::identity()).unwrap();
        assert!(err.eta.angular().norm() < 1e-14);
        assert!((err.eta.linear() - rd.rotation.inverse() * d).norm() < 1e-14);
    }

    #[test]
    fn required_velocity_identity() {
        let e = exp_se3(&Twist::from_slice(&[0.1, -0.3, 0.2, 0.5, 0.1, -0.4]));
        let vd = Twist::from_slice(&[0.3, 0.1, 0.0, -1.0, 0.5, 0.2]);
        let v = Twist::from_slice(&[0.0, 0.2, 0.1, 0.3, 0.0, 0.1]);
        let eta = log_se3(&e).unwrap();
        let g = Matrix6::identity() * 2.5;
        let vr = required_velocity(&e, &vd, &eta, &g);
        let ve = velocity_error(&e, &vd, &v);
        assert!(((vr - v) - (ve - Twist(g * eta.0))).norm() < 1e-15);
    }

    #[test]
    fn joint_velocity_least_squares() {
        let xi = Twist::from_slice(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let (q, r) = required_joint_velocity(&(xi * 0.8), &Twist::zero(), &Pose::identity(), &xi);
        assert!((q - 0.8).abs() < 1e-15 && r < 1e-15);
        let (q, r) = required_joint_velocity(&Twist::zero(), &Twist::zero(), &Pose::identity(), &xi);
        assert_eq!((q, r), (0.0, 0.0));
    }

    #[test]
    fn vpf_vanishes_with_either_factor() {
        let v = Twist::from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = Wrench::from_slice(&[1.0, -1.0, 0.5, 2.0, 0.0, 1.0]);
        assert_eq!(vpf(&v, &v, &f, &Wrench::zero()), 0.0);
        assert_eq!(vpf(&v, &Twist::zero(), &f, &f), 0.0);
    }

    #[test]
    fn joint_action_cases() {
        assert_eq!(required_joint_action(0.0, 1.2, 1.2, 3.0, 50.0), 0.0);
        assert_eq!(required_joint_action(0.0, 1.0, 0.5, 3.0, 50.0), 25.0);
    }
}
