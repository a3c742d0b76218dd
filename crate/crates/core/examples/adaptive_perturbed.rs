//! Adaptive control with a 10% inertia error, checking the estimate stays bounded.

use amgc::model::bundled;
use amgc::sim;

fn main() -> amgc::Result<()> {
    let config = bundled::load("4r_generic_amgc")?;
    let out = sim::run(&config)?;
    let s = &out.summary;
    println!("final position error {:.4e} m", s.final_position_error);
    println!("smallest estimate eigenvalue {:.4e}", s.min_lambda_min);

    let check = sim::estimate_bound_check(&out.trace, config.gains.adaptation.gamma);
    println!(
        "lambda_max(Lhat^-1 L): observed {:.4}, bound {:.4}, margin {:.4}, holds {}",
        check.observed_max, check.bound, check.margin, check.holds
    );

    let first = &out.trace.rows[0].estimate_norm;
    let last = &out.trace.rows.last().expect("trace has rows").estimate_norm;
    for (i, (a, b)) in first.iter().zip(last).enumerate() {
        println!("body {}: estimate norm {a:.4} -> {b:.4}", i + 1);
    }
    Ok(())
}
