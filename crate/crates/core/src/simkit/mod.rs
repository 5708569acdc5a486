//! Deterministic synthetic world: scenes of yaw-boxed objects, camera
//! trajectories, a ray-cast depth sensor, an oracle 2D detector and an
//! offload latency model.
//!
//! Class extents, camera intrinsics and noise levels are plumbing defaults,
//! all overridable from config files.

mod detect;
mod latency;
pub mod render;
mod scene;
mod trajectory;

pub use detect::{oracle_detect2d, oracle_detect2d_indexed, MIN_BOX_PX};
pub use latency::{delay, LatencySpec, COMPUTE_2D, COMPUTE_3D};
pub use render::{cast_ray, ray_box, render_depth, NoiseSpec};
pub use scene::{ClassCatalog, Scene, SceneObject};
pub use trajectory::{make_trajectory, Scenario, Trajectory, TrajectorySpec, RADIUS_RANGE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}
