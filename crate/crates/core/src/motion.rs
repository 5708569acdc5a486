//! Latency compensation.
//!
//! A 2D detection computed on the frame captured at `t0` arrives at `t1`. Before
//! it is lifted against the depth frame current at `t1`, its corners are
//! pushed through the tracked pose delta at an estimated object depth.

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};

use nalgebra::UnitQuaternion;
use thiserror::Error;

use crate::depthlift::{frustum_points, DepthFrame};
use crate::geometry::{project, Box2D, CameraIntrinsics, Pose, Vec3};

/// Corners closer than this to the camera plane are treated as behind it.
const MIN_FORWARD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("pose history is empty")]
    EmptyHistory,
    #[error("pose history capacity must be at least 2, got {0}")]
    Capacity(usize),
    #[error("timestamp {got} does not follow {last}")]
    NonMonotonic { last: f64, got: f64 },
    #[error("depth hint must be positive, got {0}")]
    InvalidHint(f64),
    #[error("box is not visible from the target pose")]
    NotVisible,
    #[error("no valid depth inside the box and no fallback")]
    InsufficientDepth,
}

/// Bounded, time-ordered pose samples from the tracker.
#[derive(Clone, Debug)]
pub struct PoseHistory {
    capacity: usize,
    samples: VecDeque<(f64, Pose)>,
}

impl PoseHistory {
    pub fn new(capacity: usize) -> Result<Self, MotionError> {
        if capacity < 2 {
            return Err(MotionError::Capacity(capacity));
        }
        Ok(Self { capacity, samples: VecDeque::with_capacity(capacity) })
    }

    /// Appends a sample, evicting the oldest once full.
    pub fn push(&mut self, t: f64, pose: Pose) -> Result<(), MotionError> {
        if let Some(&(last, _)) = self.samples.back() {
            if !(t > last) {
                return Err(MotionError::NonMonotonic { last, got: t });
            }
        } else if !t.is_finite() {
            return Err(MotionError::NonMonotonic { last: f64::NEG_INFINITY, got: t });
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, pose));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn latest(&self) -> Option<(f64, Pose)> {
        self.samples.back().copied()
    }

    pub fn samples(&self) -> impl Iterator<Item = &(f64, Pose)> {
        self.samples.iter()
    }

    /// Pose at time `t`: translation lerp and quaternion slerp between the
    /// bracketing samples, clamped to the endpoints outside the stored range.
    pub fn pose_at(&self, t: f64) -> Result<Pose, MotionError> {
        let (first, last) = match (self.samples.front(), self.samples.back()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(MotionError::EmptyHistory),
        };
        if t <= first.0 {
            return Ok(first.1);
        }
        if t >= last.0 {
            return Ok(last.1);
        }
        let hi = self.samples.partition_point(|(ts, _)| *ts < t);
        let (t1, p1) = self.samples[hi];
        if t1 == t {
            return Ok(p1);
        }
        let (t0, p0) = self.samples[hi - 1];
        Ok(interpolate(&p0, &p1, (t - t0) / (t1 - t0)))
    }
}

/// Blend of two poses at fraction `s ∈ [0, 1]` along the shorter rotation arc.
pub fn interpolate(a: &Pose, b: &Pose, s: f64) -> Pose {
    let qa = UnitQuaternion::from_rotation_matrix(&a.rotation);
    let mut qb = UnitQuaternion::from_rotation_matrix(&b.rotation);
    if qa.coords.dot(&qb.coords) < 0.0 {
        qb = UnitQuaternion::new_unchecked(-qb.into_inner());
    }
    // after the sign flip the arc is at most a quarter turn in S³, so slerp is
    // well conditioned
    let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(qa);
    Pose { rotation: q.to_rotation_matrix(), translation: a.translation.lerp(&b.translation, s) }
}

/// Single-writer, multi-reader handle for the tracker feed.
#[derive(Clone, Debug)]
pub struct SharedPoseHistory(Arc<RwLock<PoseHistory>>);

impl SharedPoseHistory {
    pub fn new(capacity: usize) -> Result<Self, MotionError> {
        Ok(Self(Arc::new(RwLock::new(PoseHistory::new(capacity)?))))
    }

    pub fn push(&self, t: f64, pose: Pose) -> Result<(), MotionError> {
        self.0.write().unwrap_or_else(|e| e.into_inner()).push(t, pose)
    }

    pub fn pose_at(&self, t: f64) -> Result<Pose, MotionError> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).pose_at(t)
    }

    /// Consistent copy of the whole history.
    pub fn snapshot(&self) -> PoseHistory {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Moves a box seen from `pose_t0` into the image of `pose_t1`, assuming all
/// four corners lie at camera depth `z_hint` in the `t0` frame.
pub fn reproject_box2d(
    b: &Box2D,
    pose_t0: &Pose,
    pose_t1: &Pose,
    z_hint: f64,
    intr: &CameraIntrinsics,
) -> Result<Box2D, MotionError> {
    if !(z_hint > 0.0 && z_hint.is_finite()) {
        return Err(MotionError::InvalidHint(z_hint));
    }
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for (u, v) in [(b.u_min, b.v_min), (b.u_max, b.v_min), (b.u_max, b.v_max), (b.u_min, b.v_max)] {
        let cam0 = Vec3::new((u - intr.cx) * z_hint / intr.fx, (v - intr.cy) * z_hint / intr.fy, z_hint);
        let cam1 = pose_t1.inverse_transform_point(&pose_t0.transform_point(&cam0));
        if cam1.z <= MIN_FORWARD {
            continue;
        }
        let Ok((pu, pv)) = project(intr, &cam1) else { continue };
        any = true;
        lo = (lo.0.min(pu), lo.1.min(pv));
        hi = (hi.0.max(pu), hi.1.max(pv));
    }
    if !any {
        return Err(MotionError::NotVisible);
    }
    let moved = Box2D { u_min: lo.0, v_min: lo.1, u_max: hi.0, v_max: hi.1, ..*b };
    moved.clipped(intr).ok_or(MotionError::NotVisible)
}

/// Median valid depth inside `b`, or `fallback` when the box holds no valid
/// depth.
pub fn depth_hint(frame: &DepthFrame, b: &Box2D, fallback: Option<f64>) -> Result<f64, MotionError> {
    // a box entirely off-image has no samples, same as an all-dropout box
    let mut z: Vec<f64> =
        frustum_points(frame, b).map(|points| points.iter().map(|p| p.z).collect()).unwrap_or_default();
    match crate::depthlift::median(&mut z) {
        Some(m) => Ok(m),
        None => fallback.filter(|f| *f > 0.0).ok_or(MotionError::InsufficientDepth),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObjectClass;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 180.0, 180.0, 360, 360).unwrap()
    }

    fn bx(u0: f64, v0: f64, u1: f64, v1: f64) -> Box2D {
        Box2D::new(u0, v0, u1, v1, ObjectClass::Chair, 0.8).unwrap()
    }

    #[test]
    fn pose_at_examples() {
        let mut h = PoseHistory::new(4).unwrap();
        let a = Pose::from_translation(Vec3::zeros());
        let b = Pose::from_translation(Vec3::new(2.0, 0.0, 0.0));
        h.push(1.0, a).unwrap();
        h.push(2.0, b).unwrap();
        assert_eq!(h.pose_at(1.0).unwrap(), a);
        assert_eq!(h.pose_at(2.0).unwrap(), b);
        assert!((h.pose_at(1.5).unwrap().translation - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(h.pose_at(0.0).unwrap(), a);
        assert_eq!(h.pose_at(9.0).unwrap(), b);
    }

    #[test]
    fn history_contract() {
        assert_eq!(PoseHistory::new(1).unwrap_err(), MotionError::Capacity(1));
        let mut h = PoseHistory::new(2).unwrap();
        assert_eq!(h.pose_at(0.0).unwrap_err(), MotionError::EmptyHistory);
        h.push(0.0, Pose::identity()).unwrap();
        assert!(h.push(0.0, Pose::identity()).is_err());
        h.push(1.0, Pose::identity()).unwrap();
        h.push(2.0, Pose::identity()).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.samples().next().unwrap().0, 1.0);
    }

    #[test]
    fn slerp_midpoint_of_yaw() {
        let p0 = Pose::gravity_aligned(Vec3::zeros(), 0.2, 0.3);
        let p1 = Pose::gravity_aligned(Vec3::zeros(), 1.0, 0.3);
        let mid = interpolate(&p0, &p1, 0.5);
        let expect = Pose::gravity_aligned(Vec3::zeros(), 0.6, 0.3);
        assert!((mid.matrix() - expect.matrix()).abs().max() < 1e-12);
        let m = mid.matrix();
        assert!((m.transpose() * m - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn shared_history_snapshot() {
        let h = SharedPoseHistory::new(8).unwrap();
        let writer = h.clone();
        std::thread::spawn(move || {
            for i in 0..8 {
                writer.push(i as f64, Pose::from_translation(Vec3::new(i as f64, 0.0, 0.0))).unwrap();
            }
        })
        .join()
        .unwrap();
        let snap = h.snapshot();
        assert_eq!(snap.len(), 8);
        assert!((h.pose_at(3.5).unwrap().translation.x - 3.5).abs() < 1e-12);
    }

    #[test]
    fn identity_delta_is_identity() {
        let p = Pose::gravity_aligned(Vec3::new(1.0, 2.0, 1.5), 0.7, 0.4);
        let b = bx(100.2, 50.5, 180.7, 140.1);
        let r = reproject_box2d(&b, &p, &p, 2.0, &intr()).unwrap();
        for (x, y) in [(r.u_min, b.u_min), (r.v_min, b.v_min), (r.u_max, b.u_max), (r.v_max, b.v_max)] {
            assert!((x - y).abs() <= 0.5);
        }
        assert_eq!((r.class, r.confidence), (b.class, b.confidence));
    }

    #[test]
    fn lateral_translation_shifts_by_pinhole() {
        let p0 = Pose::identity();
        // camera moves +0.5 m along its own x axis
        let p1 = Pose::from_translation(Vec3::new(0.5, 0.0, 0.0));
        let b = bx(150.0, 150.0, 210.0, 210.0);
        let r = reproject_box2d(&b, &p0, &p1, 2.0, &intr()).unwrap();
        assert!((r.u_min - 100.0).abs() < 1e-9 && (r.u_max - 160.0).abs() < 1e-9);
        assert!((r.v_min - 150.0).abs() < 1e-9);
    }

    #[test]
    fn approach_scales_without_moving_center() {
        let p0 = Pose::identity();
        let b = bx(160.0, 160.0, 200.0, 200.0);
        let toward = reproject_box2d(&b, &p0, &Pose::from_translation(Vec3::new(0.0, 0.0, 0.5)), 2.0, &intr()).unwrap();
        let lateral =
            reproject_box2d(&b, &p0, &Pose::from_translation(Vec3::new(0.5, 0.0, 0.0)), 2.0, &intr()).unwrap();
        let shift = |r: &Box2D| ((r.center().0 - b.center().0).powi(2) + (r.center().1 - b.center().1).powi(2)).sqrt();
        assert!(shift(&toward) < 1e-9);
        assert!(toward.width() > b.width());
        assert!(shift(&lateral) > shift(&toward));
    }

    #[test]
    fn behind_camera_is_not_visible() {
        let p1 = Pose::gravity_aligned(Vec3::zeros(), std::f64::consts::PI, 0.0);
        let p0 = Pose::gravity_aligned(Vec3::zeros(), 0.0, 0.0);
        let b = bx(170.0, 170.0, 190.0, 190.0);
        assert_eq!(reproject_box2d(&b, &p0, &p1, 2.0, &intr()), Err(MotionError::NotVisible));
        assert_eq!(reproject_box2d(&b, &p0, &p0, 0.0, &intr()), Err(MotionError::InvalidHint(0.0)));
    }

    #[test]
    fn depth_hint_examples() {
        let k = intr();
        let f = DepthFrame::uniform(k, 2.0, 0.0, Pose::identity()).unwrap();
        assert_eq!(depth_hint(&f, &bx(10.0, 10.0, 20.0, 20.0), None).unwrap(), 2.0);
        let mut g = DepthFrame::uniform(k, 0.0, 0.0, Pose::identity()).unwrap();
        g.depth[0] = 1.9;
        g.depth[1] = 2.0;
        g.depth[2] = 2.1;
        assert!((depth_hint(&g, &bx(0.0, 0.0, 3.0, 1.0), None).unwrap() - 2.0).abs() < 1e-6);
        assert_eq!(depth_hint(&g, &bx(50.0, 50.0, 60.0, 60.0), None), Err(MotionError::InsufficientDepth));
        assert_eq!(depth_hint(&g, &bx(50.0, 50.0, 60.0, 60.0), Some(3.0)), Ok(3.0));
    }
}
