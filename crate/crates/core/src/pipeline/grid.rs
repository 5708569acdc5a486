use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{
    evaluate_run, latency_breakdown, run, write_timeline, Detector2D, InProcessOracle, LatencyBreakdown,
    PipelineConfig, PipelineError, TimelineRecord, Variant,
};
use crate::geometry::ObjectClass;
use crate::metrics::{MetricsConfig, MetricsReport, Scores};
use crate::simkit::{make_trajectory, Scenario, Scene, TrajectorySpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellKey {
    pub variant: Variant,
    pub scenario: Scenario,
    pub speed: f64,
}

impl CellKey {
    /// File stem, e.g. `hybrid_circling_0.5`.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.variant, self.scenario, self.speed)
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub key: CellKey,
    pub report: MetricsReport,
    pub latency: LatencyBreakdown,
    pub record: TimelineRecord,
}

/// Runs one (variant, scenario, speed) cell with the in-process detector.
pub fn run_cell(
    scene: &Scene,
    key: CellKey,
    trajectory: &TrajectorySpec,
    pipeline: &PipelineConfig,
    metrics: &MetricsConfig,
) -> Result<CellResult, PipelineError> {
    let mut det = InProcessOracle::new(scene, pipeline.intrinsics, pipeline.noise);
    run_cell_with(scene, key, trajectory, pipeline, metrics, &mut det)
}

/// [`run_cell`] against any detector.
pub fn run_cell_with(
    scene: &Scene,
    key: CellKey,
    trajectory: &TrajectorySpec,
    pipeline: &PipelineConfig,
    metrics: &MetricsConfig,
    detector: &mut dyn Detector2D,
) -> Result<CellResult, PipelineError> {
    let traj = make_trajectory(&TrajectorySpec { scenario: key.scenario, speed: key.speed, ..*trajectory })?;
    let cfg = PipelineConfig { variant: key.variant, ..pipeline.clone() };
    let record = run(scene, &traj, &cfg, detector)?;
    Ok(CellResult { key, report: evaluate_run(&record, scene, metrics), latency: latency_breakdown(&record), record })
}

/// The cells of a grid in row-major order: variant, scenario, speed.
pub fn grid_keys(variants: &[Variant], scenarios: &[Scenario], speeds: &[f64]) -> Vec<CellKey> {
    variants
        .iter()
        .flat_map(|&variant| {
            scenarios
                .iter()
                .flat_map(move |&scenario| speeds.iter().map(move |&speed| CellKey { variant, scenario, speed }))
        })
        .collect()
}

/// Every variant × scenario × speed, in parallel. Results come back in
/// row-major order regardless of scheduling.
pub fn run_grid(
    scene: &Scene,
    pipelines: &BTreeMap<Variant, PipelineConfig>,
    scenarios: &[Scenario],
    speeds: &[f64],
    trajectory: &TrajectorySpec,
    metrics: &MetricsConfig,
) -> Result<Vec<CellResult>, PipelineError> {
    let variants: Vec<Variant> = pipelines.keys().copied().collect();
    let keys = grid_keys(&variants, scenarios, speeds);
    keys.par_iter().map(|k| run_cell(scene, *k, trajectory, &pipelines[&k.variant], metrics)).collect()
}

/// Written artifacts of a grid run.
#[derive(Clone, Debug, Default)]
pub struct GridOutput {
    pub reports: Vec<PathBuf>,
    pub table: Option<PathBuf>,
    pub timelines: Vec<PathBuf>,
}

impl GridOutput {
    /// Writes one CSV per cell plus `table.md`, and optionally the timelines.
    /// Every file is written to a temporary name and renamed into place.
    pub fn write(cells: &[CellResult], dir: &Path, timelines: bool) -> Result<Self, PipelineError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |e| PipelineError::Io(p, e)
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut out = GridOutput::default();
        for c in cells {
            let path = dir.join(format!("{}.csv", c.key.stem()));
            write_atomic(&path, c.report.to_csv().as_bytes()).map_err(io(&path))?;
            out.reports.push(path);
            if timelines {
                let path = dir.join(format!("{}.jsonl", c.key.stem()));
                let mut buf = Vec::new();
                write_timeline(&c.record, &mut buf).map_err(io(&path))?;
                write_atomic(&path, &buf).map_err(io(&path))?;
                out.timelines.push(path);
            }
        }
        let path = dir.join("table.md");
        write_atomic(&path, summary_table(cells).as_bytes()).map_err(io(&path))?;
        out.table = Some(path);
        Ok(out)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

type Metric = Box<dyn Fn(&Scores) -> f64>;

/// Markdown tables per scenario and metric: one row per variant, one column
/// per class plus the average, each cell listing the speeds as `a/b/c` (%).
pub fn summary_table(cells: &[CellResult]) -> String {
    let mut scenarios: Vec<Scenario> = cells.iter().map(|c| c.key.scenario).collect();
    scenarios.sort();
    scenarios.dedup();
    let mut variants: Vec<Variant> = cells.iter().map(|c| c.key.variant).collect();
    variants.sort();
    variants.dedup();
    let Some(first) = cells.first() else { return String::new() };
    let classes: Vec<ObjectClass> = first.report.classes.iter().map(|(c, _)| *c).collect();
    let mut metrics: Vec<(String, Metric)> = Vec::new();
    for (i, tau) in first.report.iou_thresholds.iter().enumerate() {
        metrics.push((format!("IoU@{tau}"), Box::new(move |s: &Scores| s.recall[i])));
    }
    for (i, tau) in first.report.iou_thresholds.iter().enumerate() {
        metrics.push((format!("mean IoU@{tau}"), Box::new(move |s: &Scores| s.iou_at[i])));
    }
    metrics.push((format!("mSPA@{}", first.report.spa_threshold), Box::new(|s: &Scores| s.mspa)));

    let mut out = String::new();
    for scenario in &scenarios {
        for (name, metric) in &metrics {
            let speeds: Vec<String> = cells
                .iter()
                .filter(|c| c.key.scenario == *scenario && c.key.variant == variants[0])
                .map(|c| c.key.speed.to_string())
                .collect();
            out += &format!("### {scenario} — {name} (speeds {} m/s)\n\n", speeds.join("/"));
            out += "| variant |";
            for c in &classes {
                out += &format!(" {c} |");
            }
            out += " average |\n|---|";
            out += &"---|".repeat(classes.len() + 1);
            out += "\n";
            for v in &variants {
                let row: Vec<&CellResult> =
                    cells.iter().filter(|c| c.key.scenario == *scenario && c.key.variant == *v).collect();
                let cell = |pick: &dyn Fn(&MetricsReport) -> Option<Scores>| {
                    row.iter()
                        .map(|c| pick(&c.report).map_or("-".to_string(), |s| format!("{:.1}", 100.0 * metric(&s))))
                        .collect::<Vec<_>>()
                        .join("/")
                };
                out += &format!("| {v} |");
                for class in &classes {
                    out += &format!(" {} |", cell(&|r| r.class(*class).cloned()));
                }
                out += &format!(" {} |\n", cell(&|r| Some(r.average())));
            }
            out += "\n";
        }
    }
    out
}
