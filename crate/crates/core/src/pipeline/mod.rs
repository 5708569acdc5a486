//! The capture → offload → lift → fuse → display loop on a virtual clock.
//!
//! Each trajectory sample is a display tick. At a tick the device may send
//! the current frame for 2D detection (bounded in-flight, reject-newest);
//! results become usable once the emulated offload latency (plus the lift
//! cost for the hybrid variant) has elapsed, and are shown from the first
//! tick at or after that moment.
//!
//! Only the 2D result is stale. Depth is always current: a hybrid result is
//! lifted against the latest depth frame at its arrival, after its box has
//! been moved through the pose delta (compensation). The monolithic-edge
//! baseline instead receives exact 3D boxes expressed in the capture camera
//! and overlays them naively in the current camera, i.e. under
//! `E = P_display ∘ P_capture⁻¹`.

mod bench;
mod detector;
mod grid;
mod record;

pub use bench::{bench_lift_stage, bench_poses, LiftBench};
pub use detector::{Detector2D, InProcessOracle, RemoteDetector};
pub use grid::{grid_keys, run_cell, run_cell_with, run_grid, summary_table, CellKey, CellResult, GridOutput};
pub use record::{
    evaluate_run, latency_breakdown, read_timeline, write_timeline, LatencyBreakdown, ResultTiming, StageStats,
    TickRecord, TimelineRecord,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depthlift::{lift, BoxFitMethod, DepthFrame, FilterConfig};
use crate::edgenet::ClientError;
use crate::fusion::{FusionMode, ObjectRegistry, RegistryConfig};
use crate::geometry::{project, Box2D, CameraIntrinsics, Detection3D, Pose};
use crate::motion::{depth_hint, reproject_box2d};
use crate::rng::{derive_seed, STREAM_DEPTH, STREAM_DETECT, STREAM_LATENCY};
use crate::simkit::{
    delay, oracle_detect2d_indexed, render_depth, LatencySpec, NoiseSpec, Scene, SimError, Trajectory, COMPUTE_3D,
};

/// Tolerance when comparing virtual times against tick times.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("detector: {0}")]
    Detector(#[from] ClientError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("record line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Edge 2D detection, on-device lifting and fusion.
    #[serde(rename = "hybrid")]
    Hybrid,
    /// Whole 3D detection on the edge, overlaid without correction.
    #[serde(rename = "monolithic")]
    MonolithicEdge3D,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Hybrid, Variant::MonolithicEdge3D];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Hybrid => "hybrid",
            Variant::MonolithicEdge3D => "monolithic",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, PipelineError> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown variant {s:?}")))
    }
}

/// Which depth frame a hybrid result is lifted against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthPairing {
    /// The latest frame at result arrival (default).
    #[default]
    LatestAtArrival,
    /// The frame captured with the image (ablation).
    AtCapture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub compensation: bool,
    pub fusion: bool,
    pub filter: FilterConfig,
    pub lift_method: BoxFitMethod,
    pub latency: LatencySpec,
    /// Virtual on-device time to lift and fuse one result, seconds.
    pub lift_cost: f64,
    pub max_inflight: usize,
    /// Truncates the run; `None` runs the whole trajectory.
    pub duration: Option<f64>,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub intrinsics: CameraIntrinsics,
    pub registry: RegistryConfig,
    pub depth_pairing: DepthPairing,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::hybrid()
    }
}

/// Default virtual lift cost, seconds.
pub const LIFT_COST: f64 = 0.005;

impl PipelineConfig {
    pub fn hybrid() -> Self {
        Self {
            variant: Variant::Hybrid,
            compensation: true,
            fusion: true,
            filter: FilterConfig::default(),
            lift_method: BoxFitMethod::MinAreaRect,
            latency: LatencySpec::default(),
            lift_cost: LIFT_COST,
            max_inflight: 3,
            duration: None,
            seed: 42,
            noise: NoiseSpec::default(),
            intrinsics: CameraIntrinsics::headset_depth(),
            registry: RegistryConfig::default(),
            depth_pairing: DepthPairing::LatestAtArrival,
        }
    }

    /// Same network, 3D-model compute.
    pub fn monolithic() -> Self {
        Self {
            variant: Variant::MonolithicEdge3D,
            latency: LatencySpec { model_compute: COMPUTE_3D, ..LatencySpec::default() },
            ..Self::hybrid()
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Hybrid => Self::hybrid(),
            Variant::MonolithicEdge3D => Self::monolithic(),
        }
    }

    /// No latency, no lift cost, no noise.
    pub fn ideal(variant: Variant) -> Self {
        Self { latency: LatencySpec::zero(), lift_cost: 0.0, noise: NoiseSpec::zero(), ..Self::for_variant(variant) }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: String| PipelineError::Config(e);
        self.filter.validate().map_err(|e| cfg(e.to_string()))?;
        self.latency.validate()?;
        self.noise.validate()?;
        self.intrinsics.validate().map_err(|e| cfg(e.to_string()))?;
        if !(self.lift_cost >= 0.0 && self.lift_cost.is_finite()) {
            return Err(cfg(format!("lift_cost must be >= 0, got {}", self.lift_cost)));
        }
        if self.max_inflight == 0 {
            return Err(cfg("max_inflight must be at least 1".into()));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(cfg(format!("duration must be > 0, got {d}")));
            }
        }
        if !(self.registry.match_dist_max > 0.0) || !(self.registry.stale_after > 0.0) {
            return Err(cfg("registry distances and times must be positive".into()));
        }
        Ok(())
    }

    fn registry_config(&self) -> RegistryConfig {
        let mode = if self.fusion { self.registry.mode } else { FusionMode::LastWriteWins };
        RegistryConfig { mode, ..self.registry }
    }
}

struct InFlight {
    frame_id: u64,
    capture_tick: usize,
    capture_t: f64,
    arrival: f64,
    available: f64,
    measured_rtt: Option<f64>,
    /// Hybrid: 2D boxes with their depth hints from the capture frame.
    boxes: Vec<(Box2D, Option<f64>)>,
    capture_frame: Option<DepthFrame>,
    /// Monolithic: world boxes of the objects the edge model reports.
    truth: Vec<Detection3D>,
}

struct DepthCache<'a> {
    scene: &'a Scene,
    cfg: &'a PipelineConfig,
    traj: &'a Trajectory,
    last: Option<(usize, DepthFrame)>,
}

impl DepthCache<'_> {
    fn frame(&mut self, tick: usize) -> &DepthFrame {
        if self.last.as_ref().map(|(t, _)| *t) != Some(tick) {
            self.last = Some((tick, render_tick(self.scene, self.cfg, self.traj, tick)));
        }
        &self.last.as_ref().expect("just rendered").1
    }
}

fn render_tick(scene: &Scene, cfg: &PipelineConfig, traj: &Trajectory, tick: usize) -> DepthFrame {
    let (t, pose) = traj.samples[tick];
    render_depth(scene, &pose, &cfg.intrinsics, &cfg.noise, derive_seed(cfg.seed, STREAM_DEPTH, tick as u64), t)
}

/// Camera depth of the same-class registry object whose projection lies
/// closest to the box center, as a depth hint of last resort.
fn registry_hint(reg: &ObjectRegistry, b: &Box2D, pose: &Pose, intr: &CameraIntrinsics) -> Option<f64> {
    let (cu, cv) = b.center();
    reg.iter()
        .filter(|(_, d)| d.class == b.class)
        .filter_map(|(_, d)| {
            let c = pose.inverse_transform_point(&d.box3d.center);
            let (u, v) = project(intr, &c).ok()?;
            Some(((u - cu).hypot(v - cv), c.z))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, z)| z)
}

/// Runs one pipeline over `traj`, querying `detector` for 2D boxes.
pub fn run(
    scene: &Scene,
    traj: &Trajectory,
    cfg: &PipelineConfig,
    detector: &mut dyn Detector2D,
) -> Result<TimelineRecord, PipelineError> {
    cfg.validate()?;
    let n_ticks = match cfg.duration {
        Some(d) => traj.samples.iter().take_while(|(t, _)| *t <= d + TIME_EPS).count(),
        None => traj.len(),
    };
    let mut registry = ObjectRegistry::new(cfg.registry_config());
    let mut pending: Vec<InFlight> = Vec::new();
    let mut overlay: Option<(Pose, f64, Vec<Detection3D>)> = None;
    let mut depth = DepthCache { scene, cfg, traj, last: None };
    let mut ticks = Vec::with_capacity(n_ticks);
    let tick_of = |t: f64| traj.samples[..n_ticks].partition_point(|(ts, _)| *ts <= t + TIME_EPS).saturating_sub(1);

    for i in 0..n_ticks {
        let (t, pose) = traj.samples[i];

        // 1. capture and offload, unless the in-flight budget is spent
        let outstanding = pending.iter().filter(|p| p.arrival > t + TIME_EPS).count();
        let dropped = outstanding >= cfg.max_inflight;
        if !dropped {
            let frame_id = i as u64;
            let det_seed = derive_seed(cfg.seed, STREAM_DETECT, frame_id);
            let arrival = delay(&cfg.latency, t, derive_seed(cfg.seed, STREAM_LATENCY, frame_id));
            let mut job = InFlight {
                frame_id,
                capture_tick: i,
                capture_t: t,
                arrival,
                available: arrival,
                measured_rtt: None,
                boxes: Vec::new(),
                capture_frame: None,
                truth: Vec::new(),
            };
            match cfg.variant {
                Variant::Hybrid => {
                    let (boxes, rtt) = detector.detect(frame_id, t, &pose, det_seed)?;
                    job.measured_rtt = rtt;
                    job.available = arrival + cfg.lift_cost;
                    let frame = depth.frame(i).clone();
                    job.boxes = boxes.into_iter().map(|b| (b, depth_hint(&frame, &b, None).ok())).collect();
                    if cfg.depth_pairing == DepthPairing::AtCapture {
                        job.capture_frame = Some(frame);
                    }
                }
                Variant::MonolithicEdge3D => {
                    job.truth = oracle_detect2d_indexed(scene, &pose, &cfg.intrinsics, &cfg.noise, det_seed)
                        .into_iter()
                        .map(|(k, b)| {
                            let o = &scene.objects[k];
                            Detection3D::new(o.box3d, o.class, b.confidence, t)
                        })
                        .collect();
                }
            }
            pending.push(job);
        }

        // 2. consume every result usable by now, in completion order
        let mut ready: Vec<InFlight> = Vec::new();
        let mut k = 0;
        while k < pending.len() {
            if pending[k].available <= t + TIME_EPS {
                ready.push(pending.swap_remove(k));
            } else {
                k += 1;
            }
        }
        ready.sort_by(|a, b| a.available.total_cmp(&b.available).then(a.frame_id.cmp(&b.frame_id)));
        let mut completed = Vec::with_capacity(ready.len());
        for job in ready {
            match cfg.variant {
                Variant::Hybrid => {
                    let lift_tick = tick_of(job.arrival).max(job.capture_tick);
                    let (capture_pose, lift_pose) = (traj.samples[job.capture_tick].1, traj.samples[lift_tick].1);
                    let at_capture = job.capture_frame.as_ref();
                    let frame = match at_capture {
                        Some(f) => f,
                        None => depth.frame(lift_tick),
                    };
                    for (b, hint) in &job.boxes {
                        let b = if cfg.compensation && at_capture.is_none() {
                            let z = hint.or_else(|| registry_hint(&registry, b, &capture_pose, &cfg.intrinsics));
                            let Some(z) = z else {
                                log::debug!("frame {}: no depth hint for {}", job.frame_id, b.class);
                                continue;
                            };
                            match reproject_box2d(b, &capture_pose, &lift_pose, z, &cfg.intrinsics) {
                                Ok(moved) => moved,
                                Err(e) => {
                                    log::debug!("frame {}: {e}", job.frame_id);
                                    continue;
                                }
                            }
                        } else {
                            *b
                        };
                        let mut det = match lift(frame, &b, &cfg.filter, cfg.lift_method) {
                            Ok(d) => d,
                            Err(e) => {
                                log::debug!("frame {}: lift {}: {e}", job.frame_id, b.class);
                                continue;
                            }
                        };
                        det.last_update = job.capture_t;
                        match registry.find_match(&det) {
                            // never let an older capture overwrite newer state
                            Some(id) if registry.get(id).is_some_and(|e| e.last_update > job.capture_t) => {}
                            Some(id) => {
                                registry.fuse(id, &det).expect("match is class-gated");
                            }
                            None => {
                                registry.insert(det);
                            }
                        }
                    }
                }
                Variant::MonolithicEdge3D => {
                    if overlay.as_ref().is_none_or(|(_, ct, _)| *ct < job.capture_t) {
                        overlay = Some((traj.samples[job.capture_tick].1, job.capture_t, job.truth));
                    }
                }
            }
            let lift_time = if cfg.variant == Variant::Hybrid { job.available - job.arrival } else { 0.0 };
            completed.push(ResultTiming {
                frame_id: job.frame_id,
                capture_t: job.capture_t,
                offload_rtt: job.arrival - job.capture_t,
                lift_time,
                end_to_end: job.available - job.capture_t,
                measured_rtt: job.measured_rtt,
            });
        }

        // 3. display set
        registry.prune(t);
        let detections = match cfg.variant {
            Variant::Hybrid => registry.snapshot(),
            Variant::MonolithicEdge3D => match &overlay {
                Some((capture_pose, _, boxes)) => {
                    let e = pose.compose(&capture_pose.inverse());
                    boxes.iter().map(|d| Detection3D { box3d: d.box3d.transformed(&e), ..*d }).collect()
                }
                None => Vec::new(),
            },
        };
        ticks.push(TickRecord { t, pose, detections, completed, dropped });
    }
    Ok(TimelineRecord { ticks })
}

/// [`run`] with the in-process oracle detector.
pub fn run_local(scene: &Scene, traj: &Trajectory, cfg: &PipelineConfig) -> Result<TimelineRecord, PipelineError> {
    let mut det = InProcessOracle::new(scene, cfg.intrinsics, cfg.noise);
    run(scene, traj, cfg, &mut det)
}
