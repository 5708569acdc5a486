use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Scene, SimError};
use crate::depthlift::DepthFrame;
use crate::geometry::{Box3D, CameraIntrinsics, Pose, Vec3};
use crate::rng;

/// Sensor and detector imperfections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Std-dev of each 2D box edge, pixels.
    pub bbox_jitter_px: f64,
    /// Probability a visible object is missed by the 2D detector.
    pub drop_prob: f64,
    /// Std-dev of additive depth noise, metres.
    pub depth_noise_m: f64,
    /// Probability an object pixel returns no depth.
    pub depth_dropout: f64,
    /// Pixels within this Chebyshev distance of a silhouette edge use
    /// `edge_dropout_prob` instead of `depth_dropout`. Zero disables the band.
    pub edge_dropout_band_px: u32,
    pub edge_dropout_prob: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            bbox_jitter_px: 2.0,
            drop_prob: 0.05,
            depth_noise_m: 0.01,
            depth_dropout: 0.05,
            edge_dropout_band_px: 2,
            edge_dropout_prob: 0.8,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            bbox_jitter_px: 0.0,
            drop_prob: 0.0,
            depth_noise_m: 0.0,
            depth_dropout: 0.0,
            edge_dropout_band_px: 0,
            edge_dropout_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("drop_prob", self.drop_prob),
            ("depth_dropout", self.depth_dropout),
            ("edge_dropout_prob", self.edge_dropout_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        for (name, s) in [("bbox_jitter_px", self.bbox_jitter_px), ("depth_noise_m", self.depth_noise_m)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SimError::Config(format!("{name} must be >= 0, got {s}")));
            }
        }
        Ok(())
    }

    fn depth_is_clean(&self) -> bool {
        self.depth_noise_m == 0.0
            && self.depth_dropout == 0.0
            && (self.edge_dropout_band_px == 0 || self.edge_dropout_prob == 0.0)
    }
}

/// Ray parameter of the first intersection with `b` at `t > 0`, using the
/// slab method in the box's yaw-aligned frame. `None` on a miss.
pub fn ray_box(b: &Box3D, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    let o = origin - b.center;
    let lo = Vec3::new(c * o.x + s * o.y, -s * o.x + c * o.y, o.z);
    let ld = Vec3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    let half = b.dims * 0.5;
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if ld[k] == 0.0 {
            if lo[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / ld[k];
        let (a, bb) = ((-half[k] - lo[k]) * inv, (half[k] - lo[k]) * inv);
        let (near, far) = if a < bb { (a, bb) } else { (bb, a) };
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return None;
        }
    }
    if t0 > 0.0 {
        Some(t0)
    } else if t1 > 0.0 {
        Some(t1)
    } else {
        None
    }
}

/// Nearest object hit along a ray, as (ray parameter, object index).
pub fn cast_ray(scene: &Scene, origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, o) in scene.objects.iter().enumerate() {
        if let Some(t) = ray_box(&o.box3d, origin, dir) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best
}

/// World direction of the ray through pixel `(u, v)`, scaled so its camera
/// `z` component is 1 (ray parameter = z-depth).
pub fn pixel_ray(pose: &Pose, intr: &CameraIntrinsics, u: f64, v: f64) -> Vec3 {
    pose.transform_vector(&Vec3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0))
}

/// Noise-free z-depth and object index (`-1` for no return) per pixel.
pub fn render_ids(scene: &Scene, pose: &Pose, intr: &CameraIntrinsics) -> (Vec<f32>, Vec<i32>) {
    let n = intr.width as usize * intr.height as usize;
    let mut depth = vec![0.0f32; n];
    let mut ids = vec![-1i32; n];
    if scene.objects.is_empty() {
        return (depth, ids);
    }
    let origin = pose.translation;
    let w = intr.width as usize;
    // z-buffer over each object's screen footprint; objects are visited in
    // index order with a strict comparison, so ties resolve like cast_ray
    let mut best = vec![f64::INFINITY; n];
    for (i, o) in scene.objects.iter().enumerate() {
        let Some((u0, u1, v0, v1)) = screen_bounds(&o.box3d, pose, intr) else { continue };
        for v in v0..=v1 {
            for u in u0..=u1 {
                let dir = pixel_ray(pose, intr, u as f64, v as f64);
                if let Some(t) = ray_box(&o.box3d, &origin, &dir) {
                    let k = v as usize * w + u as usize;
                    if t < best[k] {
                        best[k] = t;
                        depth[k] = t as f32;
                        ids[k] = i as i32;
                    }
                }
            }
        }
    }
    (depth, ids)
}

/// Inclusive pixel rectangle that contains every pixel whose ray can hit
/// `b`; the whole image when the box reaches behind the camera.
fn screen_bounds(b: &Box3D, pose: &Pose, intr: &CameraIntrinsics) -> Option<(u32, u32, u32, u32)> {
    let full = Some((0, intr.width - 1, 0, intr.height - 1));
    let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in b.corners() {
        let p = pose.inverse_transform_point(&c);
        if p.z <= 1e-6 {
            return full;
        }
        let (u, v) = (intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy);
        lo_u = lo_u.min(u);
        hi_u = hi_u.max(u);
        lo_v = lo_v.min(v);
        hi_v = hi_v.max(v);
    }
    let clamp = |x: f64, max: u32| x.clamp(0.0, max as f64) as u32;
    let (wm, hm) = (intr.width - 1, intr.height - 1);
    if hi_u < -1.0 || hi_v < -1.0 || lo_u > wm as f64 + 1.0 || lo_v > hm as f64 + 1.0 {
        return None;
    }
    Some((
        clamp(lo_u.floor() - 1.0, wm),
        clamp(hi_u.ceil() + 1.0, wm),
        clamp(lo_v.floor() - 1.0, hm),
        clamp(hi_v.ceil() + 1.0, hm),
    ))
}

/// Sliding min and max of `ids` over a `(2r+1)²` window; a pixel is in the
/// silhouette band when they differ.
fn silhouette_band(ids: &[i32], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut rows = vec![(0i32, 0i32); ids.len()];
    for y in 0..h {
        let line = &ids[y * w..(y + 1) * w];
        for x in 0..w {
            let win = &line[x.saturating_sub(r)..=(x + r).min(w - 1)];
            rows[y * w + x] = win.iter().fold((i32::MAX, i32::MIN), |(lo, hi), &i| (lo.min(i), hi.max(i)));
        }
    }
    let mut band = vec![false; ids.len()];
    for y in 0..h {
        let (a, b) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            let (mut lo, mut hi) = (i32::MAX, i32::MIN);
            for yy in a..=b {
                let (l, m) = rows[yy * w + x];
                lo = lo.min(l);
                hi = hi.max(m);
            }
            band[y * w + x] = lo != hi;
        }
    }
    band
}

/// Depth frame of `scene` seen from `pose`. Pixels where no object is hit
/// have no return (the floor is not rendered). Noise is applied in raster
/// order from `seed`, so the frame is a pure function of its arguments.
pub fn render_depth(
    scene: &Scene,
    pose: &Pose,
    intr: &CameraIntrinsics,
    noise: &NoiseSpec,
    seed: u64,
    timestamp: f64,
) -> DepthFrame {
    let (mut depth, ids) = render_ids(scene, pose, intr);
    if !noise.depth_is_clean() {
        let (w, h) = (intr.width as usize, intr.height as usize);
        let band = if noise.edge_dropout_band_px > 0 && noise.edge_dropout_prob > 0.0 {
            silhouette_band(&ids, w, h, noise.edge_dropout_band_px as usize)
        } else {
            vec![false; w * h]
        };
        let mut r = rng::rng(seed);
        let gauss = Normal::new(0.0, noise.depth_noise_m.max(f64::MIN_POSITIVE)).expect("valid std-dev");
        for k in 0..depth.len() {
            if ids[k] < 0 {
                continue;
            }
            let p_drop = if band[k] { noise.edge_dropout_prob } else { noise.depth_dropout };
            let u: f64 = r.random();
            let e = gauss.sample(&mut r);
            if u < p_drop {
                depth[k] = 0.0;
            } else if noise.depth_noise_m > 0.0 {
                depth[k] = ((depth[k] as f64 + e).max(1e-3)) as f32;
            }
        }
    }
    DepthFrame::new(*intr, depth, timestamp, *pose).expect("renderer output satisfies frame invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObjectClass;
    use crate::simkit::SceneObject;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube_scene() -> Scene {
        let b = Box3D::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(1.0, 1.0, 1.0), 0.0).unwrap();
        Scene::new(vec![SceneObject { class: ObjectClass::Box, box3d: b }], 0.0).unwrap()
    }

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(270.0, 270.0, 180.0, 120.0, 360, 240).unwrap()
    }

    #[test]
    fn cube_center_depth() {
        // identity pose: camera z is world z, so the cube sits 2 m ahead
        let f = render_depth(&cube_scene(), &Pose::identity(), &intr(), &NoiseSpec::zero(), 0, 0.0);
        assert!((f.at(180, 120) - 1.5).abs() < 1e-6);
        assert_eq!(f.at(0, 0), 0.0);
    }

    #[test]
    fn footprint_culling_matches_per_pixel_casting() {
        let scene = Scene::room();
        let intr = CameraIntrinsics::headset_depth();
        for pose in [
            Pose::gravity_aligned(Vec3::new(-3.0, 0.2, 1.4), 0.1, 0.35),
            Pose::gravity_aligned(Vec3::new(0.0, 0.0, 1.5), 2.0, 0.6),
        ] {
            let (depth, ids) = render_ids(&scene, &pose, &intr);
            for v in 0..intr.height {
                for u in 0..intr.width {
                    let k = (v * intr.width + u) as usize;
                    let dir = pixel_ray(&pose, &intr, u as f64, v as f64);
                    match cast_ray(&scene, &pose.translation, &dir) {
                        Some((t, i)) => assert_eq!((depth[k], ids[k]), (t as f32, i as i32)),
                        None => assert_eq!(ids[k], -1),
                    }
                }
            }
        }
    }

    #[test]
    fn empty_scene_no_returns() {
        let f = render_depth(&Scene::empty(), &Pose::identity(), &intr(), &NoiseSpec::default(), 3, 0.0);
        assert_eq!(f.valid_count(), 0);
    }

    /// Independent oracle: intersect the ray with each of the six face planes
    /// and keep the nearest hit inside the face rectangle.
    fn brute_ray_box(b: &Box3D, o: &Vec3, d: &Vec3) -> Option<f64> {
        let (s, c) = b.yaw.sin_cos();
        let axes = [Vec3::new(c, s, 0.0), Vec3::new(-s, c, 0.0), Vec3::z()];
        let mut best: Option<f64> = None;
        for k in 0..3 {
            for sign in [-1.0, 1.0] {
                let n = axes[k];
                let p0 = b.center + n * (sign * 0.5 * b.dims[k]);
                let denom = n.dot(d);
                if denom.abs() < 1e-15 {
                    continue;
                }
                let t = n.dot(&(p0 - o)) / denom;
                if t <= 0.0 {
                    continue;
                }
                let hit = o + d * t - b.center;
                let inside = (0..3).all(|j| j == k || hit.dot(&axes[j]).abs() <= 0.5 * b.dims[j] + 1e-12);
                if inside && best.is_none_or(|bt| t < bt) {
                    best = Some(t);
                }
            }
        }
        best
    }

    #[test]
    fn slab_matches_face_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut hits = 0;
        for _ in 0..1000 {
            let b = Box3D::new(
                Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)),
                Vec3::new(rng.random_range(0.1..1.5), rng.random_range(0.1..1.5), rng.random_range(0.1..1.5)),
                rng.random_range(-3.0..3.0),
            )
            .unwrap();
            let o = Vec3::new(rng.random_range(-4.0..-2.5), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0));
            let target = b.center
                + Vec3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let d = (target - o).normalize();
            let a = ray_box(&b, &o, &d);
            let e = brute_ray_box(&b, &o, &d);
            match (a, e) {
                (Some(x), Some(y)) => {
                    hits += 1;
                    assert!((x - y).abs() < 1e-6, "{x} vs {y}");
                }
                (None, None) => {}
                other => panic!("disagree: {other:?}"),
            }
        }
        assert!(hits > 300);
    }

    #[test]
    fn rendered_depths_match_analytic() {
        let scene = Scene::room();
        let pose = Pose::gravity_aligned(Vec3::new(-2.8, -0.2, 1.5), 0.1, 0.45);
        let k = intr();
        let f = render_depth(&scene, &pose, &k, &NoiseSpec::zero(), 0, 0.0);
        for v in (0..k.height).step_by(7) {
            for u in (0..k.width).step_by(7) {
                let d = pixel_ray(&pose, &k, u as f64, v as f64);
                let best = scene
                    .objects
                    .iter()
                    .filter_map(|o| brute_ray_box(&o.box3d, &pose.translation, &d))
                    .fold(f64::INFINITY, f64::min);
                let got = f.at(u, v);
                if best.is_finite() {
                    assert!((got as f64 - best).abs() < 1e-5, "({u},{v}) {got} vs {best}");
                } else {
                    assert_eq!(got, 0.0);
                }
            }
        }
    }

    #[test]
    fn cluttered_frame_has_many_points() {
        let pose = Pose::gravity_aligned(Vec3::new(-2.8, -0.2, 1.5), 0.1, 0.45);
        let f = render_depth(&Scene::room(), &pose, &intr(), &NoiseSpec::default(), 1, 0.0);
        assert!(f.valid_count() >= 10_000, "{}", f.valid_count());
    }

    #[test]
    fn seeded_noise_is_repeatable() {
        let pose = Pose::gravity_aligned(Vec3::new(-2.0, 0.0, 1.5), 0.0, 0.5);
        let a = render_depth(&Scene::acceptance(), &pose, &intr(), &NoiseSpec::default(), 9, 0.0);
        let b = render_depth(&Scene::acceptance(), &pose, &intr(), &NoiseSpec::default(), 9, 0.0);
        let c = render_depth(&Scene::acceptance(), &pose, &intr(), &NoiseSpec::default(), 10, 0.0);
        assert!(a.depth.iter().zip(&b.depth).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.depth, c.depth);
    }

    #[test]
    fn silhouette_band_marks_edges_only() {
        let (w, h) = (9, 5);
        let mut ids = vec![-1; w * h];
        for y in 0..h {
            for x in 4..w {
                ids[y * w + x] = 0;
            }
        }
        let band = silhouette_band(&ids, w, h, 1);
        for y in 0..h {
            for x in 0..w {
                assert_eq!(band[y * w + x], x == 3 || x == 4, "({x},{y})");
            }
        }
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseSpec::default().validate().is_ok());
        assert!(NoiseSpec { drop_prob: 1.5, ..NoiseSpec::zero() }.validate().is_err());
        assert!(NoiseSpec { depth_noise_m: -0.1, ..NoiseSpec::zero() }.validate().is_err());
    }
}
