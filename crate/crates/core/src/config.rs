//! Experiment files: what grid to run and with which pipeline settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::MetricsConfig;
use crate::pipeline::{PipelineConfig, PipelineError, Variant};
use crate::simkit::{ClassCatalog, Scenario, Scene, TrajectorySpec, COMPUTE_2D, COMPUTE_3D};

/// A grid experiment.
///
/// ```toml
/// scene = "acceptance"      # or "room", or a path to a scene file
/// seed = 42
/// variants = ["hybrid", "monolithic"]
/// scenarios = ["parallel", "away_close", "circling"]
/// speeds = [0.5, 1.0, 2.0]
/// output_dir = "results"
///
/// [pipeline.latency]
/// fixed = 0.25
/// ```
///
/// `[pipeline]` applies to every variant; the model compute of each variant
/// comes from `compute_2d`/`compute_3d` rather than `pipeline.latency`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scene: String,
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub scenarios: Vec<Scenario>,
    pub speeds: Vec<f64>,
    pub output_dir: PathBuf,
    /// Also write each cell's timeline as JSON lines.
    pub dump_timelines: bool,
    /// Emulated edge compute of the 2D detector (hybrid), seconds.
    pub compute_2d: f64,
    /// Emulated edge compute of a 3D detector (monolithic), seconds.
    pub compute_3d: f64,
    /// Path geometry; `scenario` and `speed` are taken from the grid.
    pub trajectory: TrajectorySpec,
    pub pipeline: PipelineConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scene: "acceptance".into(),
            seed: 42,
            variants: Variant::ALL.to_vec(),
            scenarios: Scenario::ALL.to_vec(),
            speeds: vec![0.5, 1.0, 2.0],
            output_dir: PathBuf::from("results"),
            dump_timelines: false,
            compute_2d: COMPUTE_2D,
            compute_3d: COMPUTE_3D,
            trajectory: TrajectorySpec::default(),
            pipeline: PipelineConfig::hybrid(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let spec: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PipelineError::Config(msg) => PipelineError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |m: &str| Err(PipelineError::Config(m.into()));
        if self.variants.is_empty() || self.scenarios.is_empty() || self.speeds.is_empty() {
            return cfg("grid is empty: need at least one variant, scenario and speed");
        }
        if self.speeds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return cfg("speeds must be positive");
        }
        if !(self.compute_2d >= 0.0 && self.compute_3d >= 0.0) {
            return cfg("compute times must be >= 0");
        }
        self.metrics.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        for (_, p) in self.pipelines() {
            p.validate()?;
        }
        for &scenario in &self.scenarios {
            for &speed in &self.speeds {
                TrajectorySpec { scenario, speed, ..self.trajectory }.validate()?;
            }
        }
        Ok(())
    }

    /// The per-variant pipeline configurations of the grid.
    pub fn pipelines(&self) -> BTreeMap<Variant, PipelineConfig> {
        self.variants
            .iter()
            .map(|&v| {
                let mut p = PipelineConfig { variant: v, seed: self.seed, ..self.pipeline.clone() };
                p.latency.model_compute = match v {
                    Variant::Hybrid => self.compute_2d,
                    Variant::MonolithicEdge3D => self.compute_3d,
                };
                (v, p)
            })
            .collect()
    }

    pub fn load_scene(&self) -> Result<Scene, PipelineError> {
        Ok(Scene::resolve(&self.scene, &ClassCatalog::builtin())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let spec = ExperimentSpec::from_toml_str("speeds = [1.0]\n[pipeline.latency]\nfixed = 0.25\n").unwrap();
        assert_eq!(spec.scenarios.len(), 3);
        let p = spec.pipelines();
        assert_eq!(p[&Variant::Hybrid].latency.fixed, 0.25);
        assert_eq!(p[&Variant::MonolithicEdge3D].latency.model_compute, COMPUTE_3D);
        assert_eq!(p[&Variant::Hybrid].latency.model_compute, COMPUTE_2D);
        assert_eq!(p[&Variant::Hybrid].variant, Variant::Hybrid);
        assert_eq!(p[&Variant::MonolithicEdge3D].variant, Variant::MonolithicEdge3D);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ExperimentSpec::from_toml_str("speeds = []\n").is_err());
        assert!(ExperimentSpec::from_toml_str("speeds = [-1.0]\n").is_err());
        assert!(ExperimentSpec::from_toml_str("variants = [\"quantum\"]\n").is_err());
        assert!(ExperimentSpec::from_toml_str("unknown_key = 1\n").is_err());
        assert!(ExperimentSpec::from_toml_str("[pipeline]\nmax_inflight = 0\n").is_err());
        assert!(ExperimentSpec::from_toml_str("[trajectory]\nradius = 20.0\n").is_err());
    }
}
