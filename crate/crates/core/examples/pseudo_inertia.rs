//! Pseudo-inertia parametrization, the regressor pairing and the log-det divergence.

use amgc::inertia::{
    bregman_divergence, estimate_ratio_eigenvalues, from_pseudo, geodesic_distance, regressor, to_pseudo, PseudoInertia,
    SpatialInertia,
};
use amgc::liegroup::{coad, Twist};
use nalgebra::{Matrix3, Matrix4, Vector3};

fn main() -> amgc::Result<()> {
    // 4 kg box, 0.4 x 0.1 x 0.1 m, centred 0.2 m along x.
    let (a, b, c, m) = (0.4_f64, 0.1_f64, 0.1_f64, 4.0);
    let ic = Matrix3::from_diagonal(&Vector3::new(b * b + c * c, a * a + c * c, a * a + b * b)) * (m / 12.0);
    let body = SpatialInertia::from_com(m, Vector3::new(0.2, 0.0, 0.0), ic)?;
    let l = to_pseudo(&body)?;
    println!("pseudo-inertia =\n{}", l.matrix());
    println!("eigenvalues {}", l.eigenvalues().transpose());
    println!("round trip error {:.2e}", (from_pseudo(&l).matrix() - body.matrix()).abs().max());

    // A rod with all mass on a line has a singular pseudo-inertia.
    let rod = Matrix4::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
        + Matrix4::from_diagonal(&nalgebra::Vector4::new(1e-2, 0.0, 0.0, 0.0));
    println!("degenerate rod accepted: {}", PseudoInertia::new(rod).is_ok());

    // The regressor turns the wrench pairing into a trace against L.
    let s = Twist::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.5, 0.0, 0.2));
    let vr = Twist::new(Vector3::new(0.0, 0.4, 0.1), Vector3::new(0.2, 0.1, 0.0));
    let ar = Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 9.81));
    let v = Twist::new(Vector3::new(0.0, 0.3, 0.2), Vector3::new(0.1, 0.1, 0.1));
    let direct = (body.apply(&ar) - coad(&v, &body.apply(&vr))).power(&s);
    let paired = regressor(&s, &vr, &ar, &v)?.pair(l.matrix());
    println!("direct {direct:.12}, through regressor {paired:.12}");

    // Divergence and geodesic distance of a 10% heavier estimate.
    let heavier = PseudoInertia::new(l.matrix() * 1.1)?;
    println!("lambda(Lhat^-1 L) = {}", estimate_ratio_eigenvalues(&l, &heavier).transpose());
    println!("divergence {:.6e}", bregman_divergence(&l, &heavier, 1.0));
    println!("geodesic distance {:.6e}", geodesic_distance(&l, &heavier));
    Ok(())
}
