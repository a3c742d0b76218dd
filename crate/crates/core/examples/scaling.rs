//! Per-step cost of the controller and dynamics as the chain grows.

use std::time::Instant;

use amgc::control::{desired_bodies, Controller};
use amgc::kindyn;
use amgc::liegroup::Wrench;
use amgc::model::{planar_chain, ControllerKind, GainSet};

fn main() -> amgc::Result<()> {
    for n in [4, 8, 16, 32, 64] {
        let model = planar_chain(&vec![(0.3, 1.0); n], 0.05)?;
        let controller = Controller::new(ControllerKind::Amgc, model.clone(), GainSet::defaults(n), 1e-3, 100.0, 8)?;
        let q = vec![0.1; n];
        let qd = vec![0.0; n];
        let desired = desired_bodies(&model, &vec![0.0; n], &qd, &qd);
        let reps = 200;
        let start = Instant::now();
        for _ in 0..reps {
            let out = controller.compute(&q, &qd, &desired)?;
            kindyn::forward_dynamics(&model, &q, &qd, out.tau.as_slice(), &Wrench::zero())?;
        }
        let per = start.elapsed().as_secs_f64() / reps as f64;
        println!("n = {n:>2}: {:>8.1} us per step, {:>6.2} us per body", per * 1e6, per * 1e6 / n as f64);
    }
    Ok(())
}
