use super::PipelineError;
use crate::edgenet::{DetectPayload, EdgeClient};
use crate::geometry::{Box2D, CameraIntrinsics, Pose};
use crate::simkit::{oracle_detect2d, NoiseSpec, Scene};

/// Source of 2D detections for a captured frame.
///
/// Returns the boxes and, for networked detectors, the measured wall-clock
/// round trip in seconds. Pipeline timing stays on the virtual clock either way.
pub trait Detector2D {
    fn detect(
        &mut self,
        frame_id: u64,
        t: f64,
        pose: &Pose,
        seed: u64,
    ) -> Result<(Vec<Box2D>, Option<f64>), PipelineError>;
}

/// Calls the oracle directly.
pub struct InProcessOracle<'a> {
    scene: &'a Scene,
    intrinsics: CameraIntrinsics,
    noise: NoiseSpec,
}

impl<'a> InProcessOracle<'a> {
    pub fn new(scene: &'a Scene, intrinsics: CameraIntrinsics, noise: NoiseSpec) -> Self {
        Self { scene, intrinsics, noise }
    }
}

impl Detector2D for InProcessOracle<'_> {
    fn detect(
        &mut self,
        _frame_id: u64,
        _t: f64,
        pose: &Pose,
        seed: u64,
    ) -> Result<(Vec<Box2D>, Option<f64>), PipelineError> {
        Ok((oracle_detect2d(self.scene, pose, &self.intrinsics, &self.noise, seed), None))
    }
}

/// Asks a detection server for a scene view it knows by id.
///
/// Wire frame ids are offset past anything the connection has already sent,
/// so one client can serve several runs.
pub struct RemoteDetector<'c> {
    client: &'c EdgeClient,
    scene_id: u64,
    base: u64,
}

impl<'c> RemoteDetector<'c> {
    pub fn new(client: &'c EdgeClient, scene_id: u64) -> Self {
        Self { client, scene_id, base: client.next_frame_id() }
    }
}

impl Detector2D for RemoteDetector<'_> {
    fn detect(
        &mut self,
        frame_id: u64,
        t: f64,
        pose: &Pose,
        seed: u64,
    ) -> Result<(Vec<Box2D>, Option<f64>), PipelineError> {
        let id = self.base + frame_id;
        let payload = DetectPayload::SceneView { scene_id: self.scene_id, pose: *pose, seed };
        let reply = self.client.detect(id, t, &payload)?;
        Ok((reply.boxes, Some(reply.rtt.as_secs_f64())))
    }
}
