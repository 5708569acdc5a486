//! World-anchored object registry with multi-view fusion.
//!
//! Each incoming detection is matched against known objects of the same
//! class; a match is folded into a confidence-weighted running mean, anything
//! else becomes a new object. The combination rule (weighted mean of center
//! and extents, doubled-angle circular mean of yaw, noisy-OR confidence) is
//! our own choice; [`FusionMode::LastWriteWins`] exists to measure it.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou3d, normalize_angle, Box3D, Detection3D, ObjectClass, Vec2, Vec3};

/// Fused confidence never exceeds this.
pub const CONFIDENCE_CAP: f64 = 0.999;
/// Weight floor so zero-confidence observations still count.
const MIN_WEIGHT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("unknown object {0}")]
    UnknownId(ObjectId),
    #[error("class mismatch: object {id} is {have}, detection is {got}")]
    ClassMismatch { id: ObjectId, have: ObjectClass, got: ObjectClass },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    WeightedMean,
    /// Each match replaces the stored box outright (fusion disabled).
    LastWriteWins,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistryConfig {
    pub match_dist_max: f64,
    /// Seconds without an update before an entry is pruned; may be infinite.
    pub stale_after: f64,
    pub mode: FusionMode,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self { match_dist_max: 0.5, stale_after: 5.0, mode: FusionMode::WeightedMean }
    }
}

/// Rotates `yaw` by a multiple of a quarter turn into `[-π/4, π/4)`, swapping
/// length and width when the multiple is odd. The rectangle is unchanged.
pub fn canonicalize_yaw(yaw: f64, dims: Vec3) -> (f64, Vec3) {
    quarter_align(yaw, dims, 0.0)
}

/// Equivalent (yaw, dims) whose yaw lies within a quarter turn centred on
/// `reference`.
fn quarter_align(yaw: f64, dims: Vec3, reference: f64) -> (f64, Vec3) {
    let mut k = ((yaw - reference) / FRAC_PI_2).round();
    let mut y = yaw - k * FRAC_PI_2;
    // keep the half-open interval exact at its upper edge
    if y - reference >= FRAC_PI_4 {
        y -= FRAC_PI_2;
        k += 1.0;
    } else if y - reference < -FRAC_PI_4 {
        y += FRAC_PI_2;
        k -= 1.0;
    }
    let d = if (k as i64).rem_euclid(2) == 1 { Vec3::new(dims.y, dims.x, dims.z) } else { dims };
    (y, d)
}

#[derive(Clone, Debug)]
struct Entry {
    det: Detection3D,
    weight: f64,
    center_sum: Vec3,
    dims_sum: Vec3,
    /// Weighted sum of (cos 2θ, sin 2θ).
    yaw_sum: Vec2,
    /// Yaw the accumulated dims are expressed against.
    yaw_ref: f64,
}

impl Entry {
    fn new(det: Detection3D) -> Self {
        let w = det.confidence.max(MIN_WEIGHT);
        let (yaw, dims) = canonicalize_yaw(det.box3d.yaw, det.box3d.dims);
        let det = Detection3D { box3d: Box3D { center: det.box3d.center, dims, yaw }, ..det };
        Self {
            det,
            weight: w,
            center_sum: det.box3d.center * w,
            dims_sum: dims * w,
            yaw_sum: Vec2::new((2.0 * yaw).cos(), (2.0 * yaw).sin()) * w,
            yaw_ref: yaw,
        }
    }

    fn absorb(&mut self, det: &Detection3D) {
        let w = det.confidence.max(MIN_WEIGHT);
        let (yaw, dims) = quarter_align(det.box3d.yaw, det.box3d.dims, self.yaw_ref);
        self.weight += w;
        self.center_sum += det.box3d.center * w;
        self.dims_sum += dims * w;
        self.yaw_sum += Vec2::new((2.0 * yaw).cos(), (2.0 * yaw).sin()) * w;

        // every aligned yaw is within π/4 of the reference, so the doubled-angle
        // mean is within π/2 of twice the reference; unwrap it next to the
        // reference so the accumulated dims keep their meaning
        let doubled = self.yaw_sum.y.atan2(self.yaw_sum.x);
        let mean_yaw = self.yaw_ref + 0.5 * normalize_angle(doubled - 2.0 * self.yaw_ref);
        self.yaw_ref = mean_yaw;

        let (yaw_out, dims_out) = canonicalize_yaw(mean_yaw, self.dims_sum / self.weight);
        let conf = 1.0 - (1.0 - self.det.confidence) * (1.0 - det.confidence);
        self.det = Detection3D {
            box3d: Box3D { center: self.center_sum / self.weight, dims: dims_out, yaw: yaw_out },
            class: self.det.class,
            confidence: conf.min(CONFIDENCE_CAP),
            view_count: self.det.view_count + 1,
            last_update: self.det.last_update.max(det.last_update),
        };
    }

    fn replace(&mut self, det: &Detection3D) {
        let views = self.det.view_count + 1;
        let last = self.det.last_update.max(det.last_update);
        *self = Entry::new(*det);
        self.det.view_count = views;
        self.det.last_update = last;
    }
}

#[derive(Clone, Debug, Default)]
pub struct ObjectRegistry {
    cfg: RegistryConfig,
    entries: BTreeMap<ObjectId, Entry>,
    next_id: u64,
}

impl ObjectRegistry {
    pub fn new(cfg: RegistryConfig) -> Self {
        Self { cfg, entries: BTreeMap::new(), next_id: 0 }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ObjectId) -> Option<&Detection3D> {
        self.entries.get(&id).map(|e| &e.det)
    }

    /// Entries in id order.
    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, &Detection3D)> {
        self.entries.iter().map(|(id, e)| (*id, &e.det))
    }

    pub fn snapshot(&self) -> Vec<Detection3D> {
        self.entries.values().map(|e| e.det).collect()
    }

    /// Nearest same-class entry within `match_dist_max` that overlaps `det`.
    pub fn find_match(&self, det: &Detection3D) -> Option<ObjectId> {
        let mut best: Option<(ObjectId, f64, f64)> = None;
        for (id, e) in &self.entries {
            if e.det.class != det.class {
                continue;
            }
            let dist = (e.det.box3d.center - det.box3d.center).norm();
            if dist > self.cfg.match_dist_max {
                continue;
            }
            let iou = iou3d(&e.det.box3d, &det.box3d);
            if iou <= 0.0 {
                continue;
            }
            // ids iterate ascending, so strict comparisons keep the lower id on ties
            let better = match best {
                None => true,
                Some((_, bd, bi)) => dist < bd || (dist == bd && iou > bi),
            };
            if better {
                best = Some((*id, dist, iou));
            }
        }
        best.map(|(id, _, _)| id)
    }

    pub fn fuse(&mut self, id: ObjectId, det: &Detection3D) -> Result<&Detection3D, FusionError> {
        let mode = self.cfg.mode;
        let e = self.entries.get_mut(&id).ok_or(FusionError::UnknownId(id))?;
        if e.det.class != det.class {
            return Err(FusionError::ClassMismatch { id, have: e.det.class, got: det.class });
        }
        match mode {
            FusionMode::WeightedMean => e.absorb(det),
            FusionMode::LastWriteWins => e.replace(det),
        }
        Ok(&e.det)
    }

    pub fn insert(&mut self, det: Detection3D) -> ObjectId {
        let id = ObjectId(self.next_id);
        self.next_id += 1;
        let mut e = Entry::new(det);
        e.det.view_count = e.det.view_count.max(1);
        self.entries.insert(id, e);
        id
    }

    pub fn insert_or_fuse(&mut self, det: Detection3D) -> ObjectId {
        match self.find_match(&det) {
            Some(id) => {
                self.fuse(id, &det).expect("matched entry shares the class");
                id
            }
            None => self.insert(det),
        }
    }

    /// Removes entries not updated within `stale_after` of `now`.
    pub fn prune(&mut self, now: f64) -> Vec<ObjectId> {
        let limit = self.cfg.stale_after;
        let stale: Vec<ObjectId> =
            self.entries.iter().filter(|(_, e)| now - e.det.last_update > limit).map(|(id, _)| *id).collect();
        for id in &stale {
            self.entries.remove(id);
        }
        stale
    }
}
