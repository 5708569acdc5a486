use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::render::{cast_ray, pixel_ray};
use super::{NoiseSpec, Scene};
use crate::geometry::{project, Box2D, CameraIntrinsics, Pose};
use crate::rng;

/// Boxes narrower or shorter than this, in pixels, are not reported.
pub const MIN_BOX_PX: f64 = 4.0;
/// Corners must be at least this far in front of the camera, metres.
const NEAR_PLANE: f64 = 0.05;

/// Oracle 2D detector returning each reported box with its scene index.
///
/// An object is reported when all eight corners are in front of the camera,
/// its clipped pixel bounds are at least [`MIN_BOX_PX`] in both directions,
/// and the ray through its projected center hits it first. Random draws are
/// made per object in scene order whether or not it is reported, so one
/// object's visibility never shifts another's noise.
pub fn oracle_detect2d_indexed(
    scene: &Scene,
    pose: &Pose,
    intr: &CameraIntrinsics,
    noise: &NoiseSpec,
    seed: u64,
) -> Vec<(usize, Box2D)> {
    let mut r = rng::rng(seed);
    let jitter = Normal::new(0.0, noise.bbox_jitter_px.max(f64::MIN_POSITIVE)).expect("valid std-dev");
    let mut out = Vec::new();
    for (i, obj) in scene.objects.iter().enumerate() {
        let drop_draw: f64 = r.random();
        let conf_draw: f64 = r.random();
        let offsets: [f64; 4] = std::array::from_fn(|_| jitter.sample(&mut r));

        let cam: Vec<_> = obj.box3d.corners().iter().map(|c| pose.inverse_transform_point(c)).collect();
        if cam.iter().any(|c| c.z <= NEAR_PLANE) {
            continue;
        }
        let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &cam {
            let (u, v) = project(intr, c).expect("corner in front of camera");
            u0 = u0.min(u);
            v0 = v0.min(v);
            u1 = u1.max(u);
            v1 = v1.max(v);
        }
        let Ok(center_px) = project(intr, &pose.inverse_transform_point(&obj.box3d.center)) else { continue };
        if !intr.contains_pixel(center_px.0, center_px.1) {
            continue;
        }
        let dir = pixel_ray(pose, intr, center_px.0, center_px.1);
        if cast_ray(scene, &pose.translation, &dir).map(|(_, j)| j) != Some(i) {
            continue;
        }
        if drop_draw < noise.drop_prob {
            continue;
        }
        if noise.bbox_jitter_px > 0.0 {
            u0 += offsets[0];
            v0 += offsets[1];
            u1 += offsets[2];
            v1 += offsets[3];
        }
        let (u0, u1) = (u0.min(u1), u0.max(u1));
        let (v0, v1) = (v0.min(v1), v0.max(v1));
        let u0 = u0.max(0.0);
        let v0 = v0.max(0.0);
        let u1 = u1.min(intr.width as f64);
        let v1 = v1.min(intr.height as f64);
        if u1 - u0 < MIN_BOX_PX || v1 - v0 < MIN_BOX_PX {
            continue;
        }
        let mut confidence = 1.0 - noise.drop_prob;
        if noise.bbox_jitter_px > 0.0 {
            confidence *= 1.0 - 0.1 * conf_draw;
        }
        out.push((i, Box2D::new(u0, v0, u1, v1, obj.class, confidence).expect("non-empty clipped box")));
    }
    out
}

pub fn oracle_detect2d(
    scene: &Scene,
    pose: &Pose,
    intr: &CameraIntrinsics,
    noise: &NoiseSpec,
    seed: u64,
) -> Vec<Box2D> {
    oracle_detect2d_indexed(scene, pose, intr, noise, seed).into_iter().map(|(_, b)| b).collect()
}
