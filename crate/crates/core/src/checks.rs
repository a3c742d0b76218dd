//! Named runtime property checks, run by `amgc check`.
//!
//! Each check samples its own inputs from a fixed seed. The co-adjoint used by
//! the duality check can be swapped out, which lets a test confirm that a
//! broken implementation is reported under its name.

use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{required_wrenches, required_wrenches_adaptive};
use crate::inertia::{
    bregman_divergence, bregman_divergence_eigen, from_pseudo, metric_inner, regressor, to_pseudo, PseudoInertia,
    SpatialInertia,
};
use crate::kindyn;
use crate::liegroup::{
    adjoint, bernoulli_operator, bracket, coad, exp_se3, log_se3, Twist, Wrench,
};
use crate::model::{bundled, ChainModel};
use crate::sim;

pub type CoadFn = fn(&Twist, &Wrench) -> Wrench;

/// Implementations the checks exercise.
#[derive(Clone, Copy)]
pub struct CheckContext {
    pub coad: CoadFn,
}

impl Default for CheckContext {
    fn default() -> Self {
        CheckContext { coad }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn(&CheckContext) -> std::result::Result<String, String>;

/// Every check in suite order.
pub const CHECKS: &[(&str, CheckFn)] = &[
    ("liegroup/exp_log_round_trip", exp_log_round_trip),
    ("liegroup/adjoint_homomorphism", adjoint_homomorphism),
    ("liegroup/jacobi_identity", jacobi_identity),
    ("liegroup/coad_duality", coad_duality),
    ("liegroup/dlog_finite_difference", dlog_finite_difference),
    ("inertia/pseudo_round_trip", pseudo_round_trip),
    ("inertia/regressor_trace_identity", regressor_trace_identity),
    ("inertia/bregman_dual_formula", bregman_dual_formula),
    ("inertia/metric_affine_invariance", metric_affine_invariance),
    ("kindyn/mass_matrix_spd", mass_matrix_spd),
    ("kindyn/id_fd_round_trip", id_fd_round_trip),
    ("kindyn/power_balance", power_balance),
    ("control/perfect_tracking", perfect_tracking),
    ("control/reduction_identity", reduction_identity),
    ("sim/vpf_telescoping", vpf_telescoping),
];

/// Runs the checks whose name contains `filter` (all when `None`).
pub fn run_checks(ctx: &CheckContext, filter: Option<&str>) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .filter(|(name, _)| filter.is_none_or(|f| name.contains(f)))
        .map(|(name, f)| match f(ctx) {
            Ok(detail) => CheckResult {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CheckResult {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed)
}

fn random_twist(rng: &mut ChaCha8Rng, scale: f64) -> Twist {
    Twist::from_slice(&std::array::from_fn(|_| rng.random_range(-scale..scale)))
}

fn random_wrench(rng: &mut ChaCha8Rng) -> Wrench {
    Wrench::from_slice(&std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

/// Twist whose rotation angle stays below `max_angle`.
fn random_log(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
    let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
    let angle = rng.random_range(0.0..max_angle);
    let lin = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
    Twist::new(axis * angle, lin)
}

fn random_physical(rng: &mut ChaCha8Rng) -> SpatialInertia {
    let mass = rng.random_range(0.5..20.0);
    let com = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let d = Vector3::from_fn(|_, _| rng.random_range(0.1..2.0));
    // principal moments satisfying the triangle inequalities
    let moments = Vector3::new(d.y + d.z, d.x + d.z, d.x + d.y) * mass * 0.1;
    let rot = crate::liegroup::exp_so3(&Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
    let inertia = rot.matrix() * nalgebra::Matrix3::from_diagonal(&moments) * rot.matrix().transpose();
    SpatialInertia::from_com(mass, com, inertia).expect("sampled inertia is consistent")
}

fn random_spd(rng: &mut ChaCha8Rng) -> PseudoInertia {
    let a = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0));
    PseudoInertia::new(a * a.transpose() + Matrix4::identity() * 0.1).expect("shifted Gram matrix is SPD")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exp_log_round_trip(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = random_log(&mut r, std::f64::consts::PI - 1e-3);
        let back = log_se3(&exp_se3(&x)).map_err(|e| e.to_string())?;
        worst = worst.max((back - x).norm());
    }
    ensure(worst < 1e-10, || format!("max error {worst:e}"))?;
    Ok(format!("1000 samples, max error {worst:.2e}"))
}

fn adjoint_homomorphism(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = exp_se3(&random_log(&mut r, 3.0));
        let b = exp_se3(&random_log(&mut r, 3.0));
        worst = worst.max((adjoint(&(a * b)) - adjoint(&a) * adjoint(&b)).abs().max());
    }
    ensure(worst < 1e-10, || format!("max error {worst:e}"))?;
    Ok(format!("max error {worst:.2e}"))
}

fn jacobi_identity(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (x, y, z) = (random_twist(&mut r, 1.0), random_twist(&mut r, 1.0), random_twist(&mut r, 1.0));
        let s = bracket(&x, &bracket(&y, &z)) + bracket(&y, &bracket(&z, &x)) + bracket(&z, &bracket(&x, &y));
        worst = worst.max(s.norm());
    }
    ensure(worst < 1e-10, || format!("max error {worst:e}"))?;
    Ok(format!("max error {worst:.2e}"))
}

fn coad_duality(ctx: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (x, y, f) = (random_twist(&mut r, 1.0), random_twist(&mut r, 1.0), random_wrench(&mut r));
        let lhs = (ctx.coad)(&x, &f).power(&y);
        let rhs = f.power(&bracket(&x, &y));
        worst = worst.max((lhs - rhs).abs());
    }
    ensure(worst < 1e-12, || format!("<coad(x, f), y> differs from <f, [x, y]> by {worst:e}"))?;
    Ok(format!("max error {worst:.2e}"))
}

fn dlog_finite_difference(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let eta = random_log(&mut r, 1.5);
        let v = random_twist(&mut r, 1.0);
        let e = exp_se3(&eta);
        let plus = log_se3(&(e * exp_se3(&(v * h)))).map_err(|e| e.to_string())?;
        let minus = log_se3(&(e * exp_se3(&(v * -h)))).map_err(|e| e.to_string())?;
        let fd = (plus - minus) * (0.5 / h);
        let b = bernoulli_operator(&eta, 12).map_err(|e| e.to_string())?;
        worst = worst.max((fd.0 - b * v).norm());
    }
    ensure(worst < 1e-6, || format!("max error {worst:e}"))?;
    Ok(format!("max error {worst:.2e}"))
}

fn pseudo_round_trip(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let m = random_physical(&mut r);
        let back = from_pseudo(&to_pseudo(&m).map_err(|e| e.to_string())?);
        worst = worst.max((back.matrix() - m.matrix()).abs().max() / m.matrix().abs().max());
    }
    ensure(worst < 1e-12, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn regressor_trace_identity(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let l = random_spd(&mut r);
        let m = from_pseudo(&l);
        let (s, vr, ar, v) = (
            random_twist(&mut r, 1.0),
            random_twist(&mut r, 1.0),
            random_twist(&mut r, 1.0),
            random_twist(&mut r, 1.0),
        );
        let direct = (m.apply(&ar) - coad(&v, &m.apply(&vr))).power(&s);
        let reg = regressor(&s, &vr, &ar, &v).map_err(|e| e.to_string())?;
        let via = reg.pair(l.matrix());
        worst = worst.max((direct - via).abs() / direct.abs().max(1.0));
    }
    ensure(worst < 1e-8, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn bregman_dual_formula(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (a, b) = (random_spd(&mut r), random_spd(&mut r));
        let d1 = bregman_divergence(&a, &b, 1.0);
        let d2 = bregman_divergence_eigen(&a, &b, 1.0);
        ensure(d1 >= -1e-12, || format!("negative divergence {d1}"))?;
        worst = worst.max((d1 - d2).abs() / d1.abs().max(1.0));
    }
    ensure(worst < 1e-10, || format!("max relative gap {worst:e}"))?;
    Ok(format!("max relative gap {worst:.2e}"))
}

fn metric_affine_invariance(_: &CheckContext) -> std::result::Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let l = random_spd(&mut r);
        let a = Matrix4::from_fn(|_, _| r.random_range(-1.0..1.0)) + Matrix4::identity() * 2.0;
        let x = Matrix4::from_fn(|_, _| r.random_range(-1.0..1.0));
        let y = Matrix4::from_fn(|_, _| r.random_range(-1.0..1.0));
        let (x, y) = (x + x.transpose(), y + y.transpose());
        let moved = PseudoInertia::new({
            let m = a * l.matrix() * a.transpose();
            (m + m.transpose()) * 0.5
        })
        .map_err(|e| e.to_string())?;
        let before = metric_inner(&l, &x, &y);
        let after = metric_inner(&moved, &(a * x * a.transpose()), &(a * y * a.transpose()));
        worst = worst.max((before - after).abs() / before.abs().max(1.0));
    }
    ensure(worst < 1e-9, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn test_arm() -> ChainModel {
    bundled::load("4r_generic").expect("bundled model loads").model
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut v = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    (v(), v(), v())
}

fn mass_matrix_spd(_: &CheckContext) -> std::result::Result<String, String> {
    let model = test_arm();
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (q, _, _) = random_state(&mut r, model.dof());
        let m = kindyn::mass_matrix(&model, &q);
        worst = worst.max((&m - m.transpose()).abs().max() / m.abs().max());
        ensure(m.clone().cholesky().is_some(), || "mass matrix not positive definite".into())?;
    }
    ensure(worst < 1e-9, || format!("asymmetry {worst:e}"))?;
    Ok(format!("relative asymmetry {worst:.2e}"))
}

fn id_fd_round_trip(_: &CheckContext) -> std::result::Result<String, String> {
    let model = test_arm();
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (q, qd, tau) = random_state(&mut r, model.dof());
        let tau: Vec<f64> = tau.iter().map(|t| t * 1e5).collect();
        let qdd = kindyn::forward_dynamics(&model, &q, &qd, &tau, &Wrench::zero()).map_err(|e| e.to_string())?;
        let back = kindyn::inverse_dynamics(&model, &q, &qd, qdd.as_slice(), &Wrench::zero());
        let scale = tau.iter().map(|t| t.abs()).fold(1.0, f64::max);
        worst = worst.max(back.iter().zip(&tau).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
    }
    ensure(worst < 1e-8, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn power_balance(_: &CheckContext) -> std::result::Result<String, String> {
    let model = test_arm();
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (q, qd, tau) = random_state(&mut r, model.dof());
        let tau: Vec<f64> = tau.iter().map(|t| t * 1e4).collect();
        let (res, scale) = sim::power_balance_residual(&model, &q, &qd, &tau, 1e-6).map_err(|e| e.to_string())?;
        worst = worst.max(res / scale.max(1e-9));
    }
    ensure(worst < 1e-5, || format!("max relative residual {worst:e}"))?;
    Ok(format!("max relative residual {worst:.2e}"))
}

fn perfect_tracking(_: &CheckContext) -> std::result::Result<String, String> {
    // With required quantities equal to the actual ones, the required wrench
    // is the Newton-Euler wrench and the command is the inverse dynamics.
    let model = test_arm();
    let mut r = rng();
    let n = model.dof();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (q, qd, qdd) = random_state(&mut r, n);
        let locals = kindyn::local_transforms(&model, &q);
        let vel = kindyn::body_velocities_with(&model, &locals, &qd, Twist::zero());
        let acc = kindyn::body_accelerations_with(&model, &locals, &vel, &qd, &qdd, kindyn::gravity_base_accel(&model));
        let inertias: Vec<SpatialInertia> = model.bodies.iter().map(|b| b.inertia).collect();
        let k_v = nalgebra::Matrix6::identity() * 2000.0;
        let f_req = required_wrenches(&inertias, &k_v, &locals, &vel, &acc, &vel);
        let tau_id = kindyn::inverse_dynamics(&model, &q, &qd, &qdd, &Wrench::zero());
        for i in 0..n {
            let b = &model.bodies[i];
            let action = crate::control::required_joint_action(qdd[i], qd[i], qd[i], b.rotor_inertia, 1e4);
            let tau = crate::control::joint_command(&b.screw_axis, &f_req[i], action);
            worst = worst.max((tau - tau_id[i]).abs() / tau_id[i].abs().max(1.0));
        }
    }
    ensure(worst < 1e-9, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn reduction_identity(_: &CheckContext) -> std::result::Result<String, String> {
    let model = test_arm();
    let mut r = rng();
    let n = model.dof();
    let estimates: Vec<PseudoInertia> = model.bodies.iter().map(|b| to_pseudo(&b.inertia).unwrap()).collect();
    let inertias: Vec<SpatialInertia> = model.bodies.iter().map(|b| b.inertia).collect();
    let k_v = nalgebra::Matrix6::identity() * 2000.0;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (q, _, _) = random_state(&mut r, n);
        let locals = kindyn::local_transforms(&model, &q);
        let v: Vec<Twist> = (0..n).map(|_| random_twist(&mut r, 1.0)).collect();
        let vr: Vec<Twist> = (0..n).map(|_| random_twist(&mut r, 1.0)).collect();
        let ar: Vec<Twist> = (0..n).map(|_| random_twist(&mut r, 10.0)).collect();
        let a = required_wrenches(&inertias, &k_v, &locals, &vr, &ar, &v);
        let (b, _) = required_wrenches_adaptive(&estimates, &k_v, &locals, &vr, &ar, &v).map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((*x - *y).norm() / x.norm().max(1.0));
        }
    }
    ensure(worst < 1e-12, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn vpf_telescoping(_: &CheckContext) -> std::result::Result<String, String> {
    let mut config = bundled::load("planar_2link").map_err(|e| e.to_string())?;
    config.scenario.duration = 1.0;
    let out = sim::run(&config).map_err(|e| e.to_string())?;
    let worst = out.summary.max_vpf_sum_relative;
    ensure(worst <= 1e-9, || format!("max relative sum {worst:e}"))?;
    Ok(format!("{} steps, max relative sum {worst:.2e}", out.summary.steps))
}
