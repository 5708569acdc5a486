use std::collections::BTreeMap;

use super::wire::DetectPayload;
use crate::geometry::{Box2D, CameraIntrinsics};
use crate::simkit::{oracle_detect2d, NoiseSpec, Scene};

/// A 2D detector the server can host.
pub trait DetectorBackend: Send + Sync {
    fn detect(&self, request: &DetectPayload) -> Result<Vec<Box2D>, String>;

    /// When true the server runs one request at a time.
    fn single_flight(&self) -> bool {
        false
    }
}

/// Serves [`oracle_detect2d`] for scenes registered by id.
#[derive(Clone, Debug)]
pub struct OracleBackend {
    pub scenes: BTreeMap<u64, Scene>,
    pub intrinsics: CameraIntrinsics,
    pub noise: NoiseSpec,
}

impl OracleBackend {
    pub fn new(scenes: BTreeMap<u64, Scene>, intrinsics: CameraIntrinsics, noise: NoiseSpec) -> Self {
        Self { scenes, intrinsics, noise }
    }

    /// Bundled scenes: 0 = acceptance, 1 = room.
    pub fn builtin_scenes() -> BTreeMap<u64, Scene> {
        BTreeMap::from([(0, Scene::acceptance()), (1, Scene::room())])
    }
}

impl DetectorBackend for OracleBackend {
    fn detect(&self, request: &DetectPayload) -> Result<Vec<Box2D>, String> {
        match request {
            DetectPayload::SceneView { scene_id, pose, seed } => {
                let scene = self.scenes.get(scene_id).ok_or_else(|| format!("unknown scene id {scene_id}"))?;
                Ok(oracle_detect2d(scene, pose, &self.intrinsics, &self.noise, *seed))
            }
            DetectPayload::RawImage { .. } => Err("oracle backend does not accept raw images".into()),
        }
    }
}
