//! Runs the perturbed MGC, AMGC and baseline scenarios side by side.

use amgc::model::bundled;
use amgc::sim;

fn main() -> amgc::Result<()> {
    let configs = ["4r_generic_mgc_perturbed", "4r_generic_amgc", "4r_generic_baseline"]
        .into_iter()
        .map(bundled::load)
        .collect::<amgc::Result<Vec<_>>>()?;
    let rows = sim::compare(&configs)?;
    sim::write_comparison_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
