//! Run the scenario × speed grid for both variants and print the tables.
//!
//! cargo run --release --example mobility_grid [experiment.toml]

use edge3d::config::ExperimentSpec;
use edge3d::pipeline::{run_grid, summary_table};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = match std::env::args().nth(1) {
        Some(p) => ExperimentSpec::load(p.as_ref())?,
        None => ExperimentSpec::default(),
    };
    let scene = spec.load_scene()?;
    let cells = run_grid(&scene, &spec.pipelines(), &spec.scenarios, &spec.speeds, &spec.trajectory, &spec.metrics)?;
    print!("{}", summary_table(&cells));
    Ok(())
}
