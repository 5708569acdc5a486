use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::SimError;
use crate::geometry::{Box3D, ObjectClass, Vec3};

const BUILTIN_CLASSES: &str = include_str!("../../configs/classes.toml");
const ACCEPTANCE_SCENE: &str = include_str!("../../configs/acceptance_scene.toml");
const ROOM_SCENE: &str = include_str!("../../configs/room_scene.toml");

/// Default (length, width, height) per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCatalog {
    dims: BTreeMap<ObjectClass, Vec3>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    classes: BTreeMap<String, CatalogEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogEntry {
    dims: [f64; 3],
}

impl ClassCatalog {
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_CLASSES).expect("bundled class catalog parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let file: CatalogFile = toml::from_str(text)?;
        let mut dims = BTreeMap::new();
        for (name, e) in file.classes {
            let class = ObjectClass::from_name(&name).ok_or_else(|| SimError::UnknownClass(name.clone()))?;
            let d = Vec3::from(e.dims);
            if !d.iter().all(|x| *x > 0.0 && x.is_finite()) {
                return Err(SimError::Config(format!("class {name}: dims must be positive")));
            }
            dims.insert(class, d);
        }
        Ok(Self { dims })
    }

    pub fn dims(&self, class: ObjectClass) -> Option<Vec3> {
        self.dims.get(&class).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneObject {
    pub class: ObjectClass,
    pub box3d: Box3D,
}

/// Static objects standing on a floor plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub floor_height: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default)]
    floor_height: f64,
    #[serde(default)]
    objects: Vec<ObjectEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectEntry {
    class: String,
    position: [f64; 2],
    #[serde(default)]
    yaw_deg: f64,
    dims: Option<[f64; 3]>,
    /// Height of the object's base above the floor (e.g. resting on a table).
    #[serde(default)]
    elevation: f64,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>, floor_height: f64) -> Result<Self, SimError> {
        if !floor_height.is_finite() {
            return Err(SimError::Config("floor height must be finite".into()));
        }
        for (i, o) in objects.iter().enumerate() {
            if !o.box3d.dims.iter().all(|d| *d > 0.0) {
                return Err(SimError::Config(format!("object {i}: dims must be positive")));
            }
        }
        Ok(Self { objects, floor_height })
    }

    pub fn empty() -> Self {
        Self { objects: Vec::new(), floor_height: 0.0 }
    }

    pub fn from_toml_str(text: &str, catalog: &ClassCatalog) -> Result<Self, SimError> {
        let file: SceneFile = toml::from_str(text)?;
        let mut objects = Vec::with_capacity(file.objects.len());
        for (i, e) in file.objects.into_iter().enumerate() {
            let class = ObjectClass::from_name(&e.class).ok_or_else(|| SimError::UnknownClass(e.class.clone()))?;
            let dims = match e.dims {
                Some(d) => Vec3::from(d),
                None => catalog
                    .dims(class)
                    .ok_or_else(|| SimError::Config(format!("object {i}: no default dims for {class}")))?,
            };
            if !(e.elevation >= 0.0) {
                return Err(SimError::Config(format!("object {i}: elevation must be >= 0")));
            }
            let center = Vec3::new(e.position[0], e.position[1], file.floor_height + e.elevation + 0.5 * dims.z);
            let box3d = Box3D::new(center, dims, e.yaw_deg.to_radians())
                .map_err(|err| SimError::Config(format!("object {i}: {err}")))?;
            objects.push(SceneObject { class, box3d });
        }
        Self::new(objects, file.floor_height)
    }

    pub fn load(path: &Path, catalog: &ClassCatalog) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text, catalog)
    }

    /// Four hand-portable objects clustered around `(0, 0, 0.3)`.
    pub fn acceptance() -> Self {
        Self::from_toml_str(ACCEPTANCE_SCENE, &ClassCatalog::builtin()).expect("bundled scene parses")
    }

    /// One object of every class spread over a room.
    pub fn room() -> Self {
        Self::from_toml_str(ROOM_SCENE, &ClassCatalog::builtin()).expect("bundled scene parses")
    }

    /// Resolves `"acceptance"`, `"room"`, or a path to a scene file.
    pub fn resolve(name: &str, catalog: &ClassCatalog) -> Result<Self, SimError> {
        match name {
            "acceptance" => Ok(Self::acceptance()),
            "room" => Ok(Self::room()),
            path => Self::load(Path::new(path), catalog),
        }
    }

    pub fn ground_truth(&self) -> Vec<(ObjectClass, Box3D)> {
        self.objects.iter().map(|o| (o.class, o.box3d)).collect()
    }
}
