mod common;

use amgc::kindyn;
use amgc::liegroup::{log_se3, Twist, Wrench};
use amgc::model::{bundled, planar_chain};
use amgc::sim;
use common::{max_abs_diff, random_vec, rng, TwoLink};
use nalgebra::DVector;
use rand::Rng;

#[test]
fn inverse_dynamics_matches_lagrangian_two_link() {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let arm = TwoLink::random(&mut r);
        let model = arm.model();
        let q = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let qd = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let qdd = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
        let expected = arm.torque(q, qd, qdd);
        let got = kindyn::inverse_dynamics(&model, &q, &qd, &qdd, &Wrench::zero());
        let scale = expected.iter().map(|x| x.abs()).fold(1.0, f64::max);
        worst = worst.max(max_abs_diff(got.as_slice(), &expected) / scale);
    }
    assert!(worst < 1e-8, "relative error {worst:e}");
}

#[test]
fn mass_matrix_symmetric_positive_definite() {
    let model = bundled::load("4r_generic").unwrap().model;
    let mut r = rng(2);
    for _ in 0..100 {
        let q = random_vec(&mut r, 4, 3.0);
        let m = kindyn::mass_matrix(&model, &q);
        let asym = (&m - m.transpose()).abs().max() / m.abs().max();
        assert!(asym < 1e-9, "asymmetry {asym:e}");
        assert!(m.symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn forward_then_inverse_dynamics_round_trip() {
    let model = bundled::load("4r_generic").unwrap().model;
    let mut r = rng(3);
    for _ in 0..100 {
        let q = random_vec(&mut r, 4, 3.0);
        let qd = random_vec(&mut r, 4, 2.0);
        let tau = random_vec(&mut r, 4, 1e5);
        let qdd = kindyn::forward_dynamics(&model, &q, &qd, &tau, &Wrench::zero()).unwrap();
        let back = kindyn::inverse_dynamics(&model, &q, &qd, qdd.as_slice(), &Wrench::zero());
        let scale = tau.iter().map(|x| x.abs()).fold(1.0, f64::max);
        assert!(max_abs_diff(back.as_slice(), &tau) / scale < 1e-8);
    }
}

#[test]
fn articulated_body_matches_dense_solve() {
    let model = bundled::load("4r_generic").unwrap().model;
    let mut r = rng(4);
    let tip = Wrench::from_slice(&[1.0, -2.0, 0.5, 10.0, 0.0, -5.0]);
    for _ in 0..50 {
        let q = random_vec(&mut r, 4, 3.0);
        let qd = random_vec(&mut r, 4, 2.0);
        let tau = random_vec(&mut r, 4, 1e5);
        let a = kindyn::forward_dynamics(&model, &q, &qd, &tau, &tip).unwrap();
        let b = kindyn::forward_dynamics_dense(&model, &q, &qd, &tau, &tip).unwrap();
        assert!((a - b).amax() < 1e-8);
    }
}

#[test]
fn body_velocities_match_finite_differences_of_poses() {
    let model = bundled::load("4r_generic").unwrap().model;
    let mut r = rng(5);
    let h = 1e-6;
    for _ in 0..20 {
        let q = random_vec(&mut r, 4, 2.0);
        let qd = random_vec(&mut r, 4, 1.0);
        let at = |s: f64| -> Vec<f64> { q.iter().zip(&qd).map(|(a, b)| a + s * b).collect() };
        let (minus, plus) = (kindyn::fk_chain(&model, &at(-h)), kindyn::fk_chain(&model, &at(h)));
        let vel = kindyn::body_velocities(&model, &q, &qd, Twist::zero());
        for i in 0..4 {
            let fd = log_se3(&(minus[i].inverse() * plus[i])).unwrap() * (0.5 / h);
            assert!((fd - vel[i]).norm() < 1e-6, "body {i}");
        }
    }
}

#[test]
fn body_accelerations_match_finite_differences_of_velocities() {
    let model = bundled::load("4r_generic").unwrap().model;
    let mut r = rng(6);
    let h = 1e-5;
    for _ in 0..20 {
        let q = random_vec(&mut r, 4, 2.0);
        let qd = random_vec(&mut r, 4, 1.0);
        let qdd = random_vec(&mut r, 4, 3.0);
        let state = |s: f64| -> (Vec<f64>, Vec<f64>) {
            let q: Vec<f64> = (0..4).map(|j| q[j] + s * qd[j] + 0.5 * s * s * qdd[j]).collect();
            let v: Vec<f64> = (0..4).map(|j| qd[j] + s * qdd[j]).collect();
            (q, v)
        };
        let ((qm, vm), (qp, vp)) = (state(-h), state(h));
        let (velm, velp) = (
            kindyn::body_velocities(&model, &qm, &vm, Twist::zero()),
            kindyn::body_velocities(&model, &qp, &vp, Twist::zero()),
        );
        let acc = kindyn::body_accelerations(&model, &q, &qd, &qdd, Twist::zero());
        for i in 0..4 {
            let fd = (velp[i] - velm[i]) * (0.5 / h);
            assert!((fd - acc[i]).norm() < 1e-6 * acc[i].norm().max(1.0), "body {i}");
        }
    }
}

#[test]
fn power_balance_along_passive_swing() {
    let model = planar_chain(&[(1.0, 2.0), (0.8, 1.0)], 0.05).unwrap();
    let zero = [0.0, 0.0];
    let mut q = DVector::from_vec(vec![0.4, -0.3]);
    let mut qd = DVector::from_vec(vec![0.0, 0.0]);
    let energy = |q: &DVector<f64>, qd: &DVector<f64>| {
        kindyn::kinetic_energy(&model, q.as_slice(), qd.as_slice()) + kindyn::potential_energy(&model, q.as_slice())
    };
    let e0 = energy(&q, &qd);
    let dt = 1e-3;
    let mut worst_rate: f64 = 0.0;
    let mut ke_max: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for _ in 0..5000 {
        let (res, scale) = sim::power_balance_residual(&model, q.as_slice(), qd.as_slice(), &zero, 1e-5).unwrap();
        worst_rate = worst_rate.max(res / scale.max(1e-9));
        (q, qd) = sim::integrate(&model, &q, &qd, &zero, dt, 4).unwrap();
        ke_max = ke_max.max(kindyn::kinetic_energy(&model, q.as_slice(), qd.as_slice()));
        drift = drift.max((energy(&q, &qd) - e0).abs());
    }
    assert!(ke_max > 1.0, "the arm should actually swing");
    assert!(worst_rate < 1e-5, "instantaneous power balance {worst_rate:e}");
    assert!(drift / ke_max < 1e-5, "energy drift {:e}", drift / ke_max);
}

#[test]
fn gravity_torque_of_horizontal_link() {
    // A single 2 kg link with its centre of mass 0.5 m out needs 9.81 N m.
    let model = planar_chain(&[(1.0, 2.0)], 0.05).unwrap();
    let tau = kindyn::inverse_dynamics(&model, &[0.0], &[0.0], &[0.0], &Wrench::zero());
    assert!((tau[0] - 2.0 * 9.81 * 0.5).abs() < 1e-12);
}

#[test]
fn tip_wrench_is_felt_at_the_joints() {
    // A tool pressing down on its environment with 10 N needs extra torque
    // -10 * 1.8 at the first joint and -10 * 0.8 at the second.
    let model = planar_chain(&[(1.0, 2.0), (0.8, 1.0)], 0.05).unwrap();
    let z = [0.0, 0.0];
    let free = kindyn::inverse_dynamics(&model, &z, &z, &z, &Wrench::zero());
    let pushed = kindyn::inverse_dynamics(&model, &z, &z, &z, &Wrench::from_slice(&[0.0, 0.0, 0.0, 0.0, -10.0, 0.0]));
    let extra = pushed - free;
    assert!((extra[0] + 18.0).abs() < 1e-12, "{extra}");
    assert!((extra[1] + 8.0).abs() < 1e-12, "{extra}");
}
