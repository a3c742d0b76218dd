//! Recursive kinematics and dynamics of a serial chain.
//!
//! Every quantity lives in the frame of the body it belongs to. Local
//! transforms follow the product of exponentials,
//! `T_{i-1,i}(q) = T_{i-1,i}(0) exp(xi_i q)`, and gravity enters through the
//! base acceleration `A_0 = (0, -g)` so the Newton-Euler recursion keeps its
//! gravity-free form.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::liegroup::{bracket, coad, transform_twist, transform_wrench_dual, Pose, Twist, Wrench};
use crate::model::{BodyModule, ChainModel};

/// `T_{i-1,i}(theta)` for one body.
pub fn fk_local(body: &BodyModule, theta: f64) -> Pose {
    body.home * crate::liegroup::exp_se3(&(body.screw_axis * theta))
}

pub fn local_transforms(model: &ChainModel, theta: &[f64]) -> Vec<Pose> {
    model.bodies.iter().zip(theta).map(|(b, &q)| fk_local(b, q)).collect()
}

/// Cumulative base-frame poses of every body.
pub fn fk_chain(model: &ChainModel, theta: &[f64]) -> Vec<Pose> {
    accumulate(&local_transforms(model, theta))
}

pub fn accumulate(locals: &[Pose]) -> Vec<Pose> {
    let mut out = Vec::with_capacity(locals.len());
    let mut t = Pose::identity();
    for l in locals {
        t = t * *l;
        out.push(t);
    }
    out
}

/// Base-frame pose of the end-effector (tool) frame.
pub fn end_effector(model: &ChainModel, theta: &[f64]) -> Pose {
    let poses = fk_chain(model, theta);
    *poses.last().expect("non-empty chain") * model.tool
}

/// Base acceleration that injects gravity into the recursion.
pub fn gravity_base_accel(model: &ChainModel) -> Twist {
    Twist::new(nalgebra::Vector3::zeros(), -model.gravity)
}

/// `V_i = Ad_{T_{i-1,i}^{-1}} V_{i-1} + xi_i theta_dot_i`.
pub fn body_velocities_with(model: &ChainModel, locals: &[Pose], theta_dot: &[f64], base_twist: Twist) -> Vec<Twist> {
    let mut out = Vec::with_capacity(locals.len());
    let mut v = base_twist;
    for ((b, t), &qd) in model.bodies.iter().zip(locals).zip(theta_dot) {
        v = transform_twist(&t.inverse(), &v) + b.screw_axis * qd;
        out.push(v);
    }
    out
}

pub fn body_velocities(model: &ChainModel, theta: &[f64], theta_dot: &[f64], base_twist: Twist) -> Vec<Twist> {
    body_velocities_with(model, &local_transforms(model, theta), theta_dot, base_twist)
}

/// `A_i = Ad_{T^{-1}} A_{i-1} + [V_i, xi_i theta_dot_i] + xi_i theta_ddot_i`.
pub fn body_accelerations_with(
    model: &ChainModel,
    locals: &[Pose],
    velocities: &[Twist],
    theta_dot: &[f64],
    theta_ddot: &[f64],
    base_accel: Twist,
) -> Vec<Twist> {
    let mut out = Vec::with_capacity(locals.len());
    let mut a = base_accel;
    for i in 0..locals.len() {
        let xi = model.bodies[i].screw_axis;
        a = transform_twist(&locals[i].inverse(), &a)
            + bracket(&velocities[i], &(xi * theta_dot[i]))
            + xi * theta_ddot[i];
        out.push(a);
    }
    out
}

pub fn body_accelerations(
    model: &ChainModel,
    theta: &[f64],
    theta_dot: &[f64],
    theta_ddot: &[f64],
    base_accel: Twist,
) -> Vec<Twist> {
    let locals = local_transforms(model, theta);
    let vel = body_velocities_with(model, &locals, theta_dot, Twist::zero());
    body_accelerations_with(model, &locals, &vel, theta_dot, theta_ddot, base_accel)
}

/// Tip wrench expressed in the tool frame, moved to the last body frame.
fn tip_in_last_body(model: &ChainModel, tip: &Wrench) -> Wrench {
    transform_wrench_dual(&model.tool.inverse(), tip)
}

/// Backward Newton-Euler pass,
/// `F_i = M_i A_i - coad(V_i, M_i V_i) + Ad^T_{T_{i,i+1}^{-1}} F_{i+1}`.
///
/// `tip_wrench` is the wrench the tool frame exerts on its environment,
/// expressed in the tool frame.
pub fn rne_wrenches(
    model: &ChainModel,
    locals: &[Pose],
    velocities: &[Twist],
    accelerations: &[Twist],
    tip_wrench: &Wrench,
) -> Vec<Wrench> {
    let n = model.dof();
    let mut out = vec![Wrench::zero(); n];
    let mut next = tip_in_last_body(model, tip_wrench);
    for i in (0..n).rev() {
        let m = &model.bodies[i].inertia;
        let f = m.apply(&accelerations[i]) - coad(&velocities[i], &m.apply(&velocities[i])) + next;
        out[i] = f;
        if i > 0 {
            next = transform_wrench_dual(&locals[i].inverse(), &f);
        }
    }
    out
}

/// Net body wrenches `M_i A_i - coad(V_i, M_i V_i)`.
pub fn net_wrenches(model: &ChainModel, velocities: &[Twist], accelerations: &[Twist]) -> Vec<Wrench> {
    model
        .bodies
        .iter()
        .zip(velocities.iter().zip(accelerations))
        .map(|(b, (v, a))| b.inertia.apply(a) - coad(v, &b.inertia.apply(v)))
        .collect()
}

fn id_with_base(
    model: &ChainModel,
    theta: &[f64],
    theta_dot: &[f64],
    theta_ddot: &[f64],
    tip_wrench: &Wrench,
    base_accel: Twist,
) -> DVector<f64> {
    let locals = local_transforms(model, theta);
    let vel = body_velocities_with(model, &locals, theta_dot, Twist::zero());
    let acc = body_accelerations_with(model, &locals, &vel, theta_dot, theta_ddot, base_accel);
    let f = rne_wrenches(model, &locals, &vel, &acc, tip_wrench);
    DVector::from_iterator(
        model.dof(),
        model
            .bodies
            .iter()
            .enumerate()
            .map(|(i, b)| b.screw_axis.as_vector().dot(f[i].as_vector()) + b.rotor_inertia * theta_ddot[i]),
    )
}

/// Actuator torques `tau_i = xi_i^T F_i + I_m theta_ddot_i`, gravity included.
pub fn inverse_dynamics(
    model: &ChainModel,
    theta: &[f64],
    theta_dot: &[f64],
    theta_ddot: &[f64],
    tip_wrench: &Wrench,
) -> DVector<f64> {
    id_with_base(model, theta, theta_dot, theta_ddot, tip_wrench, gravity_base_accel(model))
}

/// Joint-space inertia including rotor terms, one column per unit acceleration.
pub fn mass_matrix(model: &ChainModel, theta: &[f64]) -> DMatrix<f64> {
    let n = model.dof();
    let zeros = vec![0.0; n];
    let mut m = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = id_with_base(model, theta, &zeros, &unit, &Wrench::zero(), Twist::zero());
        m.set_column(j, &col);
        unit[j] = 0.0;
    }
    m
}

/// Joint accelerations by the articulated-body recursion, O(n).
pub fn forward_dynamics(
    model: &ChainModel,
    theta: &[f64],
    theta_dot: &[f64],
    tau: &[f64],
    tip_wrench: &Wrench,
) -> Result<DVector<f64>> {
    let n = model.dof();
    let locals = local_transforms(model, theta);
    let vel = body_velocities_with(model, &locals, theta_dot, Twist::zero());
    let xforms: Vec<Matrix6<f64>> = locals.iter().map(|t| t.inverse().adjoint()).collect();

    let mut ia: Vec<Matrix6<f64>> = Vec::with_capacity(n);
    let mut pa: Vec<Vector6<f64>> = Vec::with_capacity(n);
    let mut c: Vec<Vector6<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let b = &model.bodies[i];
        ia.push(b.inertia.matrix());
        pa.push(-coad(&vel[i], &b.inertia.apply(&vel[i])).0);
        c.push(bracket(&vel[i], &(b.screw_axis * theta_dot[i])).0);
    }
    pa[n - 1] += tip_in_last_body(model, tip_wrench).0;

    let mut u_vec = vec![Vector6::zeros(); n];
    let mut d = vec![0.0; n];
    let mut u = vec![0.0; n];
    for i in (0..n).rev() {
        let xi = model.bodies[i].screw_axis.0;
        let ui = ia[i] * xi;
        let di = xi.dot(&ui) + model.bodies[i].rotor_inertia;
        if !(di > 0.0) || !di.is_finite() {
            return Err(Error::Singular(format!("articulated inertia of joint {i} is {di}")));
        }
        let uu = tau[i] - xi.dot(&pa[i]) - ui.dot(&c[i]);
        u_vec[i] = ui;
        d[i] = di;
        u[i] = uu;
        if i > 0 {
            let ia_red = ia[i] - ui * ui.transpose() / di;
            let pa_red = pa[i] + ia[i] * c[i] + ui * (uu / di);
            let x = &xforms[i];
            let ia_parent = x.transpose() * ia_red * x;
            let pa_parent = x.transpose() * pa_red;
            ia[i - 1] += ia_parent;
            pa[i - 1] += pa_parent;
        }
    }

    let mut qdd = DVector::zeros(n);
    let mut a = gravity_base_accel(model).0;
    for i in 0..n {
        let xi = model.bodies[i].screw_axis.0;
        let a_parent = xforms[i] * a;
        qdd[i] = (u[i] - u_vec[i].dot(&a_parent)) / d[i];
        a = a_parent + c[i] + xi * qdd[i];
    }
    if !qdd.iter().all(|x| x.is_finite()) {
        return Err(Error::Singular("forward dynamics produced a non-finite acceleration".into()));
    }
    Ok(qdd)
}

/// Reference forward dynamics: dense mass matrix and Cholesky solve.
pub fn forward_dynamics_dense(
    model: &ChainModel,
    theta: &[f64],
    theta_dot: &[f64],
    tau: &[f64],
    tip_wrench: &Wrench,
) -> Result<DVector<f64>> {
    let n = model.dof();
    let bias = inverse_dynamics(model, theta, theta_dot, &vec![0.0; n], tip_wrench);
    let rhs = DVector::from_column_slice(tau) - bias;
    let chol = mass_matrix(model, theta)
        .cholesky()
        .ok_or_else(|| Error::Singular("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Kinetic energy of links and rotors.
pub fn kinetic_energy(model: &ChainModel, theta: &[f64], theta_dot: &[f64]) -> f64 {
    let vel = body_velocities(model, theta, theta_dot, Twist::zero());
    model
        .bodies
        .iter()
        .zip(&vel)
        .zip(theta_dot)
        .map(|((b, v), qd)| 0.5 * b.inertia.apply(v).power(v) + 0.5 * b.rotor_inertia * qd * qd)
        .sum()
}

/// Potential energy, zero at the base origin.
pub fn potential_energy(model: &ChainModel, theta: &[f64]) -> f64 {
    fk_chain(model, theta)
        .iter()
        .zip(&model.bodies)
        .map(|(t, b)| -b.inertia.mass() * model.gravity.dot(&t.transform_point(&b.inertia.com())))
        .sum()
}

/// Power delivered by gravity to the links.
pub fn gravity_power(model: &ChainModel, theta: &[f64], theta_dot: &[f64]) -> f64 {
    let poses = fk_chain(model, theta);
    let vel = body_velocities(model, theta, theta_dot, Twist::zero());
    poses
        .iter()
        .zip(&vel)
        .zip(&model.bodies)
        .map(|((t, v), b)| {
            let g_body = t.rotation.inverse() * model.gravity;
            b.inertia.apply(&Twist::new(nalgebra::Vector3::zeros(), g_body)).power(v)
        })
        .sum()
}

/// Body Jacobian of the tool frame: `V_ee = J theta_dot`, expressed in the tool frame.
pub fn body_jacobian(model: &ChainModel, theta: &[f64]) -> DMatrix<f64> {
    let n = model.dof();
    let poses = fk_chain(model, theta);
    let ee = poses[n - 1] * model.tool;
    let ee_inv = ee.inverse();
    let mut j = DMatrix::zeros(6, n);
    for (k, (p, b)) in poses.iter().zip(&model.bodies).enumerate() {
        let col = transform_twist(&(ee_inv * *p), &b.screw_axis);
        j.column_mut(k).copy_from(col.as_vector());
    }
    j
}
