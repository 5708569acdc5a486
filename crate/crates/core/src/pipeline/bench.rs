use std::time::Instant;

use super::{PipelineConfig, StageStats};
use crate::depthlift::{lift, DepthFrame};
use crate::fusion::ObjectRegistry;
use crate::geometry::{Box2D, Pose, Vec3};
use crate::motion::{depth_hint, reproject_box2d};
use crate::rng::{derive_seed, STREAM_DEPTH, STREAM_DETECT};
use crate::simkit::{oracle_detect2d, render_depth, Scene};

/// Wall-clock timing of the on-device stage, one sample per frame.
#[derive(Clone, Debug)]
pub struct LiftBench {
    /// Seconds spent on each frame's detections.
    pub samples: Vec<f64>,
    pub stats: StageStats,
    pub max_detections: usize,
}

/// Look-around poses circling the room scene at `radius`.
pub fn bench_poses(n: usize, radius: f64) -> Vec<Pose> {
    let target = Vec3::new(0.0, 0.0, 0.4);
    (0..n)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / n.max(1) as f64;
            let pos = target + Vec3::new(radius * th.cos(), radius * th.sin(), 1.1);
            Pose::gravity_aligned(pos, th + std::f64::consts::PI, 1.1f64.atan2(radius))
        })
        .collect()
}

/// Times depth-hint + reprojection + lift + fusion for every detection in
/// each of `poses`, single-threaded. Rendering and detection are prepared
/// beforehand and not timed.
pub fn bench_lift_stage(scene: &Scene, poses: &[Pose], cfg: &PipelineConfig) -> LiftBench {
    let frames: Vec<(Pose, DepthFrame, Vec<Box2D>)> = poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let i = i as u64;
            let depth =
                render_depth(scene, pose, &cfg.intrinsics, &cfg.noise, derive_seed(cfg.seed, STREAM_DEPTH, i), 0.0);
            let boxes =
                oracle_detect2d(scene, pose, &cfg.intrinsics, &cfg.noise, derive_seed(cfg.seed, STREAM_DETECT, i));
            (*pose, depth, boxes)
        })
        .collect();
    let mut registry = ObjectRegistry::new(cfg.registry);
    let mut samples = Vec::with_capacity(frames.len());
    for (i, (pose, depth, boxes)) in frames.iter().enumerate() {
        let start = Instant::now();
        for b in boxes {
            let Ok(z) = depth_hint(depth, b, None) else { continue };
            let Ok(moved) = reproject_box2d(b, pose, pose, z, &cfg.intrinsics) else { continue };
            if let Ok(mut det) = lift(depth, &moved, &cfg.filter, cfg.lift_method) {
                det.last_update = i as f64;
                registry.insert_or_fuse(det);
            }
        }
        samples.push(start.elapsed().as_secs_f64());
    }
    LiftBench {
        stats: StageStats::from_samples(&samples),
        samples,
        max_detections: frames.iter().map(|f| f.2.len()).max().unwrap_or(0),
    }
}
