//! Set-point regulation of the bundled 4R arm with the modular geometric controller.

use amgc::model::bundled;
use amgc::sim;

fn main() -> amgc::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "4r_generic_mgc".into());
    let config = bundled::load(&name)?;
    println!("{}: {} bodies, {:.0} kg", config.name, config.model.dof(), config.model.total_mass());
    let start = std::time::Instant::now();
    let out = sim::run(&config)?;
    println!("simulated {} s in {:.2?}", config.scenario.duration, start.elapsed());
    println!("{}", serde_json::to_string_pretty(&out.summary).expect("summary serializes"));
    Ok(())
}
