//! Stage latencies of both variants under the same emulated network.
//! The ratio follows from the emulated compute times (13 ms for a 2D
//! detector, 283 ms for a point-cloud 3D detector); it is not a hardware
//! measurement.
//!
//! cargo run --example latency_breakdown

use edge3d::pipeline::{latency_breakdown, run_local, PipelineConfig, Variant};
use edge3d::simkit::{make_trajectory, TrajectorySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = edge3d::simkit::Scene::acceptance();
    let traj = make_trajectory(&TrajectorySpec::default())?;
    let mut e2e = Vec::new();
    for v in Variant::ALL {
        let b = latency_breakdown(&run_local(&scene, &traj, &PipelineConfig::for_variant(v))?);
        println!("## {v}\n\n{}", b.to_markdown());
        e2e.push(b.end_to_end.mean);
    }
    println!("end-to-end ratio monolithic / hybrid: {:.2}x", e2e[1] / e2e[0]);
    Ok(())
}
