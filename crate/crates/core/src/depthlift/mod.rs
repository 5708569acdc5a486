//! On-device 3D box estimation from a 2D detection and a depth frame.
//!
//! The stage runs in three steps: crop the depth pixels under the 2D box
//! (the frustum), gate outlier depths with a median ± k·MAD test, then fit a
//! yaw-oriented box to the surviving points in the world frame.
//!
//! The filtering and fitting procedure here is our own operationalization:
//! a median/MAD gate on camera depth followed by either an axis-aligned
//! footprint or a minimum-area rotated footprint.

mod frame;

pub use frame::{is_valid_depth, DepthFrame, FrameError, DPF1_MAGIC};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{convex_hull, rect_from_hull, Box2D, Box3D, Detection3D, Pose, Vec2, Vec3};

/// Points within this many metres of the median survive when MAD is zero.
pub const ZERO_MAD_TOL: f64 = 1e-6;
/// Footprints thinner than this are treated as collinear.
pub const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("2D box does not intersect the depth image")]
    EmptyCrop,
    #[error("insufficient depth: {have} usable samples, need {need}")]
    InsufficientDepth { have: usize, need: usize },
    #[error("too many missing depth pixels: {ratio:.3} > {max:.3}")]
    TooManyInvalid { ratio: f64, max: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
}

impl LiftError {
    /// Whether the failure is due to missing or rejected depth samples.
    pub fn is_insufficient_depth(&self) -> bool {
        matches!(self, LiftError::InsufficientDepth { .. } | LiftError::TooManyInvalid { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub mad_k: f64,
    pub min_points: usize,
    pub invalid_ratio_max: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { mad_k: 3.0, min_points: 20, invalid_ratio_max: 0.9 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), LiftError> {
        if !(self.mad_k > 0.0) {
            return Err(LiftError::InvalidConfig(format!("mad_k must be > 0, got {}", self.mad_k)));
        }
        if self.min_points < 4 {
            return Err(LiftError::InvalidConfig(format!("min_points must be >= 4, got {}", self.min_points)));
        }
        if !(0.0..=1.0).contains(&self.invalid_ratio_max) {
            return Err(LiftError::InvalidConfig(format!(
                "invalid_ratio_max must be in [0, 1], got {}",
                self.invalid_ratio_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxFitMethod {
    /// Axis-aligned footprint, yaw 0.
    Aabb,
    /// Minimum-area rotated footprint.
    #[default]
    MinAreaRect,
}

/// Pixel index ranges covered by `box` inside the image. Pixel `i` is
/// included when its center lies in `[u_min, u_max)`.
fn pixel_ranges(frame: &DepthFrame, b: &Box2D) -> Option<(std::ops::Range<u32>, std::ops::Range<u32>)> {
    let clamp = |x: f64, hi: u32| -> u32 { x.ceil().clamp(0.0, hi as f64) as u32 };
    let u0 = clamp(b.u_min, frame.width);
    let u1 = clamp(b.u_max, frame.width);
    let v0 = clamp(b.v_min, frame.height);
    let v1 = clamp(b.v_max, frame.height);
    (u0 < u1 && v0 < v1).then_some((u0..u1, v0..v1))
}

struct Crop {
    points: Vec<Vec3>,
    pixels: usize,
}

fn crop(frame: &DepthFrame, b: &Box2D) -> Result<Crop, LiftError> {
    let (us, vs) = pixel_ranges(frame, b).ok_or(LiftError::EmptyCrop)?;
    let k = &frame.intrinsics;
    let (inv_fx, inv_fy) = (1.0 / k.fx, 1.0 / k.fy);
    let pixels = us.len() * vs.len();
    let mut points = Vec::with_capacity(pixels);
    for v in vs {
        let row = &frame.depth[v as usize * frame.width as usize..][..frame.width as usize];
        let ny = (v as f64 - k.cy) * inv_fy;
        for u in us.clone() {
            let d = row[u as usize];
            if is_valid_depth(d) {
                let z = d as f64;
                points.push(Vec3::new((u as f64 - k.cx) * inv_fx * z, ny * z, z));
            }
        }
    }
    Ok(Crop { points, pixels })
}

/// Camera-frame points for every valid depth pixel inside `box ∩ image`, in
/// raster order.
pub fn frustum_points(frame: &DepthFrame, b: &Box2D) -> Result<Vec<Vec3>, LiftError> {
    crop(frame, b).map(|c| c.points)
}

/// Median of `values` (reorders the slice). Even counts average the two
/// middle elements.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        Some(m)
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (below + m))
    }
}

/// Keeps points whose depth lies within `mad_k · MAD` of the median depth.
/// Order is preserved. With zero MAD only points at the median (to within
/// [`ZERO_MAD_TOL`]) survive.
pub fn mad_gate(points: &[Vec3], mad_k: f64) -> Vec<Vec3> {
    let mut z: Vec<f64> = points.iter().map(|p| p.z).collect();
    let Some(med) = median(&mut z) else {
        return Vec::new();
    };
    for (dst, p) in z.iter_mut().zip(points) {
        *dst = (p.z - med).abs();
    }
    let mad = median(&mut z).unwrap_or(0.0);
    let gate = if mad > 0.0 { mad_k * mad } else { ZERO_MAD_TOL };
    points.iter().copied().filter(|p| (p.z - med).abs() <= gate).collect()
}

/// [`mad_gate`] followed by the `min_points` check.
pub fn robust_depth_filter(points: &[Vec3], cfg: &FilterConfig) -> Result<Vec<Vec3>, LiftError> {
    let kept = mad_gate(points, cfg.mad_k);
    if kept.len() < cfg.min_points {
        return Err(LiftError::InsufficientDepth { have: kept.len(), need: cfg.min_points });
    }
    Ok(kept)
}

/// Fits a world-frame box to camera-frame `points` observed from `pose`.
///
/// Height spans the points along world-up. The footprint is either the
/// axis-aligned bounds or the minimum-area rotated rectangle of the
/// up-projected points. Bounds are inclusive, so every input point lies in
/// the returned box.
pub fn estimate_box3d(points: &[Vec3], pose: &Pose, method: BoxFitMethod) -> Result<Box3D, LiftError> {
    if points.len() < 3 {
        return Err(LiftError::DegenerateGeometry("fewer than three points"));
    }
    let mut z_lo = f64::INFINITY;
    let mut z_hi = f64::NEG_INFINITY;
    let footprint: Vec<Vec2> = points
        .iter()
        .map(|p| {
            let w = pose.transform_point(p);
            z_lo = z_lo.min(w.z);
            z_hi = z_hi.max(w.z);
            Vec2::new(w.x, w.y)
        })
        .collect();
    if z_hi - z_lo < DEGENERATE_TOL {
        return Err(LiftError::DegenerateGeometry("points span no height"));
    }
    let hull = convex_hull(&footprint);
    let rect = rect_from_hull(&hull).ok_or(LiftError::DegenerateGeometry("collinear footprint"))?;
    if rect.width < DEGENERATE_TOL || rect.length < DEGENERATE_TOL {
        return Err(LiftError::DegenerateGeometry("collinear footprint"));
    }
    let z_mid = 0.5 * (z_lo + z_hi);
    let height = z_hi - z_lo;
    let b = match method {
        BoxFitMethod::MinAreaRect => Box3D::new(
            Vec3::new(rect.center.x, rect.center.y, z_mid),
            Vec3::new(rect.length, rect.width, height),
            rect.angle,
        ),
        BoxFitMethod::Aabb => {
            let (mut lo, mut hi) = (hull[0], hull[0]);
            for p in &hull {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            Box3D::new(
                Vec3::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y), z_mid),
                Vec3::new(hi.x - lo.x, hi.y - lo.y, height),
                0.0,
            )
        }
    };
    b.map_err(|_| LiftError::DegenerateGeometry("non-positive extent"))
}

/// Frustum crop → depth gate → box fit. The detection inherits class and
/// confidence from the 2D box and is stamped with the frame time.
pub fn lift(frame: &DepthFrame, b: &Box2D, cfg: &FilterConfig, method: BoxFitMethod) -> Result<Detection3D, LiftError> {
    cfg.validate()?;
    let Crop { points, pixels } = crop(frame, b)?;
    let invalid_ratio = 1.0 - points.len() as f64 / pixels as f64;
    if invalid_ratio > cfg.invalid_ratio_max {
        return Err(LiftError::TooManyInvalid { ratio: invalid_ratio, max: cfg.invalid_ratio_max });
    }
    let kept = robust_depth_filter(&points, cfg)?;
    let box3d = estimate_box3d(&kept, &frame.pose, method)?;
    Ok(Detection3D::new(box3d, b.class, b.confidence, frame.timestamp))
}
