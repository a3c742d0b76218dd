//! Forward kinematics, inverse and forward dynamics of the bundled 4R arm.

use amgc::kindyn;
use amgc::liegroup::Wrench;
use amgc::model::bundled;

fn main() -> amgc::Result<()> {
    let model = bundled::load("4r_generic")?.model;
    let q = [0.3, -0.2, 0.9, 0.5];
    let qd = [0.1, 0.0, -0.2, 0.4];
    let qdd = [0.0; 4];

    let ee = kindyn::end_effector(&model, &q);
    println!("tool position {}", ee.translation.transpose());

    let tau = kindyn::inverse_dynamics(&model, &q, &qd, &qdd, &Wrench::zero());
    println!("torque holding the arm at constant velocity {}", tau.transpose());

    let m = kindyn::mass_matrix(&model, &q);
    println!("joint-space inertia\n{m:.3}");

    let back = kindyn::forward_dynamics(&model, &q, &qd, tau.as_slice(), &Wrench::zero())?;
    println!("forward dynamics recovers qdd = {}", back.transpose());

    let e = kindyn::kinetic_energy(&model, &q, &qd) + kindyn::potential_energy(&model, &q);
    println!("total energy {e:.6} J");
    Ok(())
}
