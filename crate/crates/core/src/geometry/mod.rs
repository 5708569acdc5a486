//! Camera model, rigid transforms and yaw-oriented 3D boxes.
//!
//! Conventions used throughout the crate:
//!
//! * World frame is right-handed with `+z` up. All boxes rotate about `+z` only.
//! * Camera frame follows the pinhole convention: `+x` right, `+y` down, `+z`
//!   forward. Pixel `(u, v)` holds the sample at the pixel *center*, so the
//!   principal point maps onto the optical axis.
//! * A [`Pose`] maps camera coordinates into world coordinates
//!   (world-from-camera).

mod iou;
pub mod polygon;

pub use iou::{iou3d, iou3d_mc};
pub use polygon::{clip_convex, convex_hull, min_area_rect, polygon_area, rect_from_hull, Rect2};

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Orthonormality tolerance for [`Pose`] rotations.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid depth {0} (must be positive and finite)")]
    InvalidDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Pinhole projection parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    /// 360×360 depth sensor with fx = fy = 270 (roughly 67° field of view).
    pub fn headset_depth() -> Self {
        Self { fx: 270.0, fy: 270.0, cx: 180.0, cy: 180.0, width: 360, height: 360 }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!("cx={} outside [0, {})", self.cx, self.width)));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!("cy={} outside [0, {})", self.cy, self.height)));
        }
        Ok(())
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Back-projects pixel `(u, v)` at metric depth `z` into the camera frame.
pub fn unproject(intr: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Result<Vec3, GeometryError> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(GeometryError::InvalidDepth(z));
    }
    Ok(Vec3::new((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z))
}

/// Projects a camera-frame point to pixels. The result may fall outside the
/// image; callers clip.
pub fn project(intr: &CameraIntrinsics, p: &Vec3) -> Result<(f64, f64), GeometryError> {
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok((intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy))
}

/// Rigid world-from-camera transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= ROTATION_TOL) {
            return Err(GeometryError::InvalidPose(format!("rotation is not orthonormal (max deviation {err:e})")));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(GeometryError::InvalidPose(format!("rotation determinant {det}")));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite translation".into()));
        }
        Ok(Self { rotation: Rotation3::from_matrix_unchecked(rotation), translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vec3::zeros() }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Rotation3::identity(), translation }
    }

    /// Camera at `position` with horizontal heading `heading` (radians from
    /// world `+x`, counter-clockwise) pitched down by `pitch` radians. Roll is
    /// always zero, so two such poses differ by a yaw and a translation only.
    pub fn gravity_aligned(position: Vec3, heading: f64, pitch: f64) -> Self {
        let (sh, ch) = heading.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let forward = Vec3::new(cp * ch, cp * sh, -sp);
        let right = Vec3::new(sh, -ch, 0.0);
        let down = forward.cross(&right);
        let m = Matrix3::from_columns(&[right, down, forward]);
        Self { rotation: Rotation3::from_matrix_unchecked(m), translation: position }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    /// Camera-frame point into world coordinates.
    pub fn transform_point(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation * p_cam + self.translation
    }

    /// World point into this pose's camera frame.
    pub fn inverse_transform_point(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p_world - self.translation)
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self { rotation: r_inv, translation: -(r_inv * self.translation) }
    }

    /// `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// True when the rotation maps world-up onto itself within `tol`.
    pub fn preserves_up(&self, tol: f64) -> bool {
        let up = self.rotation * Vec3::z();
        (up - Vec3::z()).norm() <= tol
    }

    /// Rotation angle about world-up. Only meaningful when [`Self::preserves_up`].
    pub fn yaw(&self) -> f64 {
        let m = self.rotation.matrix();
        m[(1, 0)].atan2(m[(0, 0)])
    }

    /// Row-major rotation followed by translation (12 values).
    pub fn to_array(&self) -> [f64; 12] {
        let m = self.rotation.matrix();
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = m[(r, c)];
            }
        }
        out[9..12].copy_from_slice(self.translation.as_slice());
        out
    }

    pub fn from_array(values: &[f64; 12]) -> Result<Self, GeometryError> {
        let m = Matrix3::from_row_slice(&values[..9]);
        Self::new(m, Vec3::new(values[9], values[10], values[11]))
    }
}

/// The object categories the detector and the evaluation tables cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Table,
    Chair,
    Bottle,
    Box,
    Book,
    Desk,
    Bag,
    Tv,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 8] = [
        ObjectClass::Table,
        ObjectClass::Chair,
        ObjectClass::Bottle,
        ObjectClass::Box,
        ObjectClass::Book,
        ObjectClass::Desk,
        ObjectClass::Bag,
        ObjectClass::Tv,
    ];

    /// The subset used by the mobile experiments.
    pub const MOBILE: [ObjectClass; 4] = [ObjectClass::Chair, ObjectClass::Bottle, ObjectClass::Box, ObjectClass::Bag];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Table => "table",
            ObjectClass::Chair => "chair",
            ObjectClass::Bottle => "bottle",
            ObjectClass::Box => "box",
            ObjectClass::Book => "book",
            ObjectClass::Desk => "desk",
            ObjectClass::Bag => "bag",
            ObjectClass::Tv => "tv",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pixel-space detection rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub class: ObjectClass,
    pub confidence: f64,
}

impl Box2D {
    pub fn new(
        u_min: f64,
        v_min: f64,
        u_max: f64,
        v_max: f64,
        class: ObjectClass,
        confidence: f64,
    ) -> Result<Self, GeometryError> {
        if !(u_min < u_max && v_min < v_max) {
            return Err(GeometryError::InvalidBox(format!("empty rectangle [{u_min}, {u_max}] x [{v_min}, {v_max}]")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::InvalidBox(format!("confidence {confidence}")));
        }
        Ok(Self { u_min, v_min, u_max, v_max, class, confidence })
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Intersects the box with the image plane extent `[0, w] × [0, h]`.
    pub fn clipped(&self, intr: &CameraIntrinsics) -> Option<Self> {
        let u_min = self.u_min.max(0.0);
        let v_min = self.v_min.max(0.0);
        let u_max = self.u_max.min(intr.width as f64);
        let v_max = self.v_max.min(intr.height as f64);
        (u_min < u_max && v_min < v_max).then_some(Self { u_min, v_min, u_max, v_max, ..*self })
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Metric box rotated about world-up.
///
/// `dims` is (length, width, height): length runs along the box's local `x`
/// axis (the `yaw` direction), width along local `y`, height along world `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Vec3,
    pub dims: Vec3,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(center: Vec3, dims: Vec3, yaw: f64) -> Result<Self, GeometryError> {
        if !dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(GeometryError::InvalidBox(format!("dims must be positive, got {dims:?}")));
        }
        if !center.iter().all(|c| c.is_finite()) || !yaw.is_finite() {
            return Err(GeometryError::InvalidBox("non-finite center or yaw".into()));
        }
        Ok(Self { center, dims, yaw: normalize_angle(yaw) })
    }

    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    pub fn z_min(&self) -> f64 {
        self.center.z - 0.5 * self.dims.z
    }

    pub fn z_max(&self) -> f64 {
        self.center.z + 0.5 * self.dims.z
    }

    /// Footprint rectangle, counter-clockwise viewed from `+z`, starting at
    /// local `(-l/2, -w/2)`.
    pub fn footprint(&self) -> [Vec2; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.dims.x;
        let hw = 0.5 * self.dims.y;
        [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
            .map(|(x, y)| Vec2::new(self.center.x + c * x - s * y, self.center.y + s * x + c * y))
    }

    /// Eight corners: bottom face counter-clockwise viewed from `+z` (same
    /// order as [`Self::footprint`]), then the top face in the same order.
    pub fn corners(&self) -> [Vec3; 8] {
        let fp = self.footprint();
        let (z0, z1) = (self.z_min(), self.z_max());
        std::array::from_fn(|i| {
            let p = fp[i % 4];
            Vec3::new(p.x, p.y, if i < 4 { z0 } else { z1 })
        })
    }

    /// Whether a world point lies inside the box (boundary inclusive).
    pub fn contains(&self, p: &Vec3) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center;
        let x = c * d.x + s * d.y;
        let y = -s * d.x + c * d.y;
        x.abs() <= 0.5 * self.dims.x && y.abs() <= 0.5 * self.dims.y && d.z.abs() <= 0.5 * self.dims.z
    }

    /// Applies an up-preserving rigid transform. Any tilt in `pose` is ignored
    /// beyond its yaw component.
    pub fn transformed(&self, pose: &Pose) -> Self {
        Self {
            center: pose.transform_point(&self.center),
            dims: self.dims,
            yaw: normalize_angle(self.yaw + pose.yaw()),
        }
    }
}

/// A classed, scored, world-anchored 3D detection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection3D {
    #[serde(rename = "box")]
    pub box3d: Box3D,
    pub class: ObjectClass,
    pub confidence: f64,
    pub view_count: u32,
    pub last_update: f64,
}

impl Detection3D {
    pub fn new(box3d: Box3D, class: ObjectClass, confidence: f64, last_update: f64) -> Self {
        Self { box3d, class, confidence: confidence.clamp(0.0, 1.0), view_count: 1, last_update }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr200() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 180.0, 180.0, 360, 360).unwrap()
    }

    #[test]
    fn unproject_examples() {
        let intr = intr200();
        assert_eq!(unproject(&intr, 180.0, 180.0, 2.0).unwrap(), Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(unproject(&intr, 280.0, 180.0, 2.0).unwrap(), Vec3::new(1.0, 0.0, 2.0));
        assert!(matches!(unproject(&intr, 1.0, 1.0, 0.0), Err(GeometryError::InvalidDepth(_))));
        assert!(matches!(unproject(&intr, 1.0, 1.0, -1.0), Err(GeometryError::InvalidDepth(_))));
    }

    #[test]
    fn project_examples() {
        let intr = intr200();
        assert_eq!(project(&intr, &Vec3::new(0.0, 0.0, 1.0)).unwrap(), (180.0, 180.0));
        assert_eq!(project(&intr, &Vec3::new(1.0, 0.0, 2.0)).unwrap(), (280.0, 180.0));
        assert!(matches!(project(&intr, &Vec3::new(0.0, 0.0, -1.0)), Err(GeometryError::BehindCamera(_))));
    }

    #[test]
    fn project_unproject_round_trip() {
        let intr = intr200();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let u = rng.random_range(0.0..360.0);
            let v = rng.random_range(0.0..360.0);
            let z = rng.random_range(0.1..10.0);
            let (pu, pv) = project(&intr, &unproject(&intr, u, v, z).unwrap()).unwrap();
            assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::headset_depth().validate().is_ok());
    }

    #[test]
    fn transform_examples() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().transform_point(&p), p);
        let t = Pose::from_translation(Vec3::new(0.0, 0.0, 5.0));
        assert_eq!(t.transform_point(&Vec3::new(0.0, 0.0, 1.0)), Vec3::new(0.0, 0.0, 6.0));
    }

    #[test]
    fn inverse_pose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let pose = Pose::gravity_aligned(
                Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 1.5),
                rng.random_range(-PI..PI),
                rng.random_range(-0.5..0.5),
            );
            let p = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 2.0);
            let back = pose.inverse().transform_point(&pose.transform_point(&p));
            assert!((back - p).norm() < 1e-9);
            let composed = pose.inverse().compose(&pose);
            assert!((composed.transform_point(&p) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn gravity_aligned_pose_is_valid() {
        let pose = Pose::gravity_aligned(Vec3::new(1.0, 2.0, 1.5), 0.7, 0.4);
        assert!(Pose::new(*pose.matrix(), pose.translation).is_ok());
        // camera forward points along heading, pitched down
        let fwd = pose.transform_vector(&Vec3::z());
        assert!(
            (fwd - Vec3::new(0.4f64.cos() * 0.7f64.cos(), 0.4f64.cos() * 0.7f64.sin(), -0.4f64.sin())).norm() < 1e-12
        );
        // delta between two gravity-aligned poses with equal pitch keeps up
        let other = Pose::gravity_aligned(Vec3::new(0.0, 0.0, 1.5), -1.1, 0.4);
        let delta = other.compose(&pose.inverse());
        assert!(delta.preserves_up(1e-12));
        assert!((normalize_angle(delta.yaw() - (-1.1 - 0.7))).abs() < 1e-12);
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(Pose::new(m, Vec3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity() * 1.01, Vec3::zeros()).is_err());
        let pose = Pose::gravity_aligned(Vec3::new(1.0, 2.0, 3.0), 0.3, 0.2);
        assert_eq!(Pose::from_array(&pose.to_array()).unwrap(), pose);
    }

    #[test]
    fn unit_cube_corners() {
        let b = Box3D::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), 0.0).unwrap();
        let c = b.corners();
        for p in &c {
            assert!(p.iter().all(|x| (x.abs() - 0.5).abs() < 1e-15));
        }
        // bottom face first, counter-clockwise from +z
        assert_eq!(c[0], Vec3::new(-0.5, -0.5, -0.5));
        assert_eq!(c[1], Vec3::new(0.5, -0.5, -0.5));
        assert_eq!(c[2], Vec3::new(0.5, 0.5, -0.5));
        assert_eq!(c[4], Vec3::new(-0.5, -0.5, 0.5));
        assert!(polygon_area(&b.footprint()) > 0.0);
    }

    #[test]
    fn yaw_quarter_turn_swaps_extents() {
        let b = Box3D::new(Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0), PI / 2.0).unwrap();
        let c = b.corners();
        let max_x = c.iter().map(|p| p.x.abs()).fold(0.0, f64::max);
        let max_y = c.iter().map(|p| p.y.abs()).fold(0.0, f64::max);
        assert!((max_x - 0.5).abs() < 1e-12);
        assert!((max_y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_centroid_is_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let b = Box3D::new(
                Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0)),
                Vec3::new(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)),
                rng.random_range(-PI..PI),
            )
            .unwrap();
            let sum: Vec3 = b.corners().iter().sum();
            assert!((sum / 8.0 - b.center).norm() < 1e-12);
        }
    }

    #[test]
    fn yaw_is_normalized() {
        let b = Box3D::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), 3.0 * PI).unwrap();
        assert!((-PI..PI).contains(&b.yaw));
        assert_eq!(normalize_angle(PI), -PI);
        assert!(Box3D::new(Vec3::zeros(), Vec3::new(0.0, 1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn box2d_validation_and_clip() {
        assert!(Box2D::new(5.0, 0.0, 5.0, 1.0, ObjectClass::Box, 0.5).is_err());
        assert!(Box2D::new(0.0, 0.0, 5.0, 1.0, ObjectClass::Box, 1.5).is_err());
        let intr = CameraIntrinsics::headset_depth();
        let b = Box2D::new(-10.0, 350.0, 20.0, 400.0, ObjectClass::Box, 0.5).unwrap();
        let c = b.clipped(&intr).unwrap();
        assert_eq!((c.u_min, c.v_min, c.u_max, c.v_max), (0.0, 350.0, 20.0, 360.0));
        let outside = Box2D::new(400.0, 0.0, 410.0, 10.0, ObjectClass::Box, 0.5).unwrap();
        assert!(outside.clipped(&intr).is_none());
    }

    #[test]
    fn class_ids_round_trip() {
        for c in ObjectClass::ALL {
            assert_eq!(ObjectClass::from_id(c.id()), Some(c));
            assert_eq!(ObjectClass::from_name(c.name()), Some(c));
        }
        assert_eq!(ObjectClass::from_id(8), None);
    }
}
