//! Exponential, logarithm, adjoint and the differential of the logarithm on SE(3).

use amgc::liegroup::{adjoint, bernoulli_operator, bracket, coad, exp_se3, log_se3, transform_twist, Twist, Wrench};
use nalgebra::Vector3;

fn main() -> amgc::Result<()> {
    let x = Twist::new(Vector3::new(0.0, 0.0, 1.2), Vector3::new(0.5, 0.0, 0.1));
    let t = exp_se3(&x);
    println!("exp(x) =\n{}", t.to_homogeneous());
    let back = log_se3(&t)?;
    println!("log(exp(x)) - x = {:.2e}", (back - x).norm());

    // Ad_{AB} = Ad_A Ad_B
    let s = exp_se3(&Twist::new(Vector3::new(0.3, -0.2, 0.1), Vector3::new(0.0, 1.0, 0.0)));
    let gap = (adjoint(&(t * s)) - adjoint(&t) * adjoint(&s)).abs().max();
    println!("adjoint homomorphism gap = {gap:.2e}");

    // Power is frame independent: <Ad_T^-T f, Ad_T v> = <f, v>.
    let v = Twist::new(Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 0.0, -1.0));
    let f = Wrench::new(Vector3::new(2.0, 0.0, 1.0), Vector3::new(0.0, -9.81, 0.0));
    let moved_v = transform_twist(&t, &v);
    let moved_f = Wrench(t.inverse().adjoint().transpose() * f.0);
    println!("power before {:.6}, after {:.6}", f.power(&v), moved_f.power(&moved_v));

    // <coad(x, f), y> = <f, [x, y]>
    println!("duality gap = {:.2e}", (coad(&x, &f).power(&v) - f.power(&bracket(&x, &v))).abs());

    // d/dt log(E exp(t v)) at t = 0 is B(eta) v.
    let eta = log_se3(&t)?;
    let h = 1e-6;
    let fd = (log_se3(&(t * exp_se3(&(v * h))))? - log_se3(&(t * exp_se3(&(v * -h))))?) * (0.5 / h);
    for order in [2, 4, 8, 12] {
        let b = bernoulli_operator(&eta, order)?;
        println!("order {order:>2}: |B v - finite difference| = {:.2e}", (b * v - fd.0).norm());
    }
    Ok(())
}
