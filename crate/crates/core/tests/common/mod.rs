#![allow(dead_code)]

use amgc::inertia::SpatialInertia;
use amgc::liegroup::{Pose, Twist};
use amgc::model::{BodyModule, ChainModel};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_twist(rng: &mut ChaCha8Rng, scale: f64) -> Twist {
    Twist::from_slice(&std::array::from_fn(|_| rng.random_range(-scale..scale)))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Parameters of a planar two-link arm rotating about `z` with gravity along `-y`.
#[derive(Clone, Copy, Debug)]
pub struct TwoLink {
    pub l1: f64,
    pub m: [f64; 2],
    /// Centre of mass distance along each link.
    pub c: [f64; 2],
    /// Moment of inertia about `z` at each centre of mass.
    pub izz: [f64; 2],
    pub rotor: [f64; 2],
    pub g: f64,
}

impl TwoLink {
    pub fn random(rng: &mut ChaCha8Rng) -> TwoLink {
        TwoLink {
            l1: rng.random_range(0.3..1.5),
            m: [rng.random_range(0.5..5.0), rng.random_range(0.5..5.0)],
            c: [rng.random_range(0.1..0.8), rng.random_range(0.1..0.8)],
            izz: [rng.random_range(0.01..0.5), rng.random_range(0.01..0.5)],
            rotor: [rng.random_range(0.01..0.2), rng.random_range(0.01..0.2)],
            g: 9.81,
        }
    }

    pub fn model(&self) -> ChainModel {
        let body = |i: usize, home: f64| {
            // Izz given; pick Ixx, Iyy so the triangle inequalities hold.
            let iz = self.izz[i];
            let ic = Matrix3::from_diagonal(&Vector3::new(0.5 * iz, 0.6 * iz, iz));
            BodyModule {
                name: format!("link{}", i + 1),
                screw_axis: Twist::new(Vector3::z(), Vector3::zeros()),
                home: Pose::from_translation(Vector3::new(home, 0.0, 0.0)),
                inertia: SpatialInertia::from_com(self.m[i], Vector3::new(self.c[i], 0.0, 0.0), ic).unwrap(),
                rotor_inertia: self.rotor[i],
            }
        };
        ChainModel {
            name: "two_link_oracle".into(),
            bodies: vec![body(0, 0.0), body(1, self.l1)],
            gravity: Vector3::new(0.0, -self.g, 0.0),
            tool: Pose::identity(),
        }
    }

    /// Closed-form Euler-Lagrange torques.
    pub fn torque(&self, q: [f64; 2], qd: [f64; 2], qdd: [f64; 2]) -> [f64; 2] {
        let [m1, m2] = self.m;
        let [c1, c2] = self.c;
        let l1 = self.l1;
        let (s2, c2q) = (q[1].sin(), q[1].cos());
        let m11 = self.izz[0] + m1 * c1 * c1 + self.izz[1] + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * c2q) + self.rotor[0];
        let m12 = self.izz[1] + m2 * (c2 * c2 + l1 * c2 * c2q);
        let m22 = self.izz[1] + m2 * c2 * c2 + self.rotor[1];
        let mass = Matrix2::new(m11, m12, m12, m22);
        let h = m2 * l1 * c2 * s2;
        let coriolis = Vector2::new(-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]);
        let c12 = (q[0] + q[1]).cos();
        let gravity = Vector2::new(
            (m1 * c1 + m2 * l1) * self.g * q[0].cos() + m2 * c2 * self.g * c12,
            m2 * c2 * self.g * c12,
        );
        let tau = mass * Vector2::new(qdd[0], qdd[1]) + coriolis + gravity;
        [tau.x, tau.y]
    }
}
