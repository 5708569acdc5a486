//! Start the oracle detection server on a loopback port, run the hybrid
//! pipeline against it, and check it matches the in-process oracle.
//!
//! cargo run --example edge_loopback

use std::sync::Arc;

use edge3d::edgenet::{serve, ClientConfig, EdgeClient, OracleBackend, ServerConfig};
use edge3d::geometry::CameraIntrinsics;
use edge3d::pipeline::{latency_breakdown, run, run_local, PipelineConfig, RemoteDetector};
use edge3d::simkit::{make_trajectory, NoiseSpec, Scenario, Scene, TrajectorySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let backend =
        OracleBackend::new(OracleBackend::builtin_scenes(), CameraIntrinsics::headset_depth(), NoiseSpec::default());
    let server = serve(Arc::new(backend), "127.0.0.1:0", ServerConfig { model_compute: 0.013, jitter: 0.0, seed: 1 })?;
    let client = EdgeClient::connect(server.local_addr(), ClientConfig::default())?;
    println!("server on {}, ping {:.2} ms", server.local_addr(), client.ping()?.as_secs_f64() * 1e3);

    let scene = Scene::acceptance();
    let traj = make_trajectory(&TrajectorySpec { scenario: Scenario::Circling, speed: 1.0, ..Default::default() })?;
    let cfg = PipelineConfig::hybrid();
    let remote = run(&scene, &traj, &cfg, &mut RemoteDetector::new(&client, 0))?;
    let local = run_local(&scene, &traj, &cfg)?;
    let same = remote.ticks.iter().zip(&local.ticks).all(|(a, b)| a.detections == b.detections);
    println!("{} ticks, display sets identical to in-process: {same}", remote.ticks.len());
    let b = latency_breakdown(&remote);
    if let Some(m) = b.measured_rtt {
        println!("measured loopback rtt: mean {:.2} ms, p95 {:.2} ms", m.mean * 1e3, m.p95 * 1e3);
    }
    println!("max in flight on the wire: {}", client.max_observed_inflight());
    drop(client);
    server.shutdown();
    Ok(())
}
