use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geometry::{Detection3D, Pose};
use crate::metrics::{match_and_score, MetricsConfig, MetricsReport};
use crate::simkit::Scene;

/// Timing of one result consumed at a tick. Times in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTiming {
    pub frame_id: u64,
    pub capture_t: f64,
    /// Capture to arrival of the edge result (network + compute).
    pub offload_rtt: f64,
    /// On-device lift and fuse.
    pub lift_time: f64,
    /// Capture to the result being usable for display.
    pub end_to_end: f64,
    /// Wall-clock round trip, when a real server answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_rtt: Option<f64>,
}

/// What was displayed at one tick, in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub pose: Pose,
    pub detections: Vec<Detection3D>,
    pub completed: Vec<ResultTiming>,
    /// The frame captured at this tick was not offloaded (budget exhausted).
    pub dropped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimelineRecord {
    pub ticks: Vec<TickRecord>,
}

impl TimelineRecord {
    pub fn completed(&self) -> impl Iterator<Item = &ResultTiming> {
        self.ticks.iter().flat_map(|t| &t.completed)
    }

    pub fn dropped_count(&self) -> usize {
        self.ticks.iter().filter(|t| t.dropped).count()
    }
}

/// One JSON object per tick, newline separated.
pub fn write_timeline<W: Write>(rec: &TimelineRecord, mut out: W) -> std::io::Result<()> {
    for tick in &rec.ticks {
        serde_json::to_writer(&mut out, tick)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads [`write_timeline`] output. Blank lines are ignored.
pub fn read_timeline<R: BufRead>(input: R) -> Result<TimelineRecord, PipelineError> {
    let mut ticks = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::Io(format!("line {}", i + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tick =
            serde_json::from_str(&line).map_err(|e| PipelineError::Record { line: i + 1, msg: e.to_string() })?;
        ticks.push(tick);
    }
    Ok(TimelineRecord { ticks })
}

/// Per-tick scores of the displayed set against the scene, averaged over ticks.
///
/// Ticks before the first result count (with nothing displayed).
pub fn evaluate_run(rec: &TimelineRecord, scene: &Scene, cfg: &MetricsConfig) -> MetricsReport {
    let gts = scene.ground_truth();
    let per_tick: Vec<MetricsReport> = rec.ticks.iter().map(|t| match_and_score(&t.detections, &gts, cfg)).collect();
    MetricsReport::mean_of(&per_tick, cfg)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub count: usize,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

impl StageStats {
    /// Nearest-rank percentile; zeros when empty.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self { count: n, mean: v.iter().sum::<f64>() / n as f64, p95: v[rank - 1], max: v[n - 1] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub offload_rtt: StageStats,
    pub lift: StageStats,
    pub end_to_end: StageStats,
    /// Wall-clock round trips, if a server was used.
    pub measured_rtt: Option<StageStats>,
    pub dropped_frames: usize,
}

pub fn latency_breakdown(rec: &TimelineRecord) -> LatencyBreakdown {
    let pick = |f: fn(&ResultTiming) -> f64| StageStats::from_samples(&rec.completed().map(f).collect::<Vec<_>>());
    let measured: Vec<f64> = rec.completed().filter_map(|r| r.measured_rtt).collect();
    LatencyBreakdown {
        offload_rtt: pick(|r| r.offload_rtt),
        lift: pick(|r| r.lift_time),
        end_to_end: pick(|r| r.end_to_end),
        measured_rtt: (!measured.is_empty()).then(|| StageStats::from_samples(&measured)),
        dropped_frames: rec.dropped_count(),
    }
}

impl LatencyBreakdown {
    pub fn to_markdown(&self) -> String {
        let ms =
            |s: &StageStats| format!("{} | {:.1} | {:.1} | {:.1}", s.count, s.mean * 1e3, s.p95 * 1e3, s.max * 1e3);
        let mut out = String::from("| stage | n | mean ms | p95 ms | max ms |\n|---|---|---|---|---|\n");
        out += &format!("| offload | {} |\n", ms(&self.offload_rtt));
        out += &format!("| lift | {} |\n", ms(&self.lift));
        out += &format!("| end-to-end | {} |\n", ms(&self.end_to_end));
        if let Some(m) = &self.measured_rtt {
            out += &format!("| measured rtt | {} |\n", ms(m));
        }
        out += &format!("\ndropped frames: {}\n", self.dropped_frames);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Box3D, ObjectClass, Vec3};

    fn sample() -> TimelineRecord {
        let b = Box3D::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.4, 0.3, 0.2), 0.25).unwrap();
        let timing = |id| ResultTiming {
            frame_id: id,
            capture_t: id as f64 / 30.0,
            offload_rtt: 0.035 + id as f64 * 1e-3,
            lift_time: 0.005,
            end_to_end: 0.04 + id as f64 * 1e-3,
            measured_rtt: None,
        };
        TimelineRecord {
            ticks: (0..20)
                .map(|i| TickRecord {
                    t: i as f64 / 30.0,
                    pose: Pose::identity(),
                    detections: vec![Detection3D::new(b, ObjectClass::Bag, 0.9, 0.0)],
                    completed: vec![timing(i)],
                    dropped: i % 7 == 3,
                })
                .collect(),
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let rec = sample();
        let mut buf = Vec::new();
        write_timeline(&rec, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|c| **c == b'\n').count(), 20);
        assert_eq!(read_timeline(buf.as_slice()).unwrap(), rec);
    }

    #[test]
    fn bad_line_is_reported() {
        let mut buf = Vec::new();
        write_timeline(&sample(), &mut buf).unwrap();
        buf.extend_from_slice(b"{\"t\": oops}\n");
        match read_timeline(buf.as_slice()) {
            Err(PipelineError::Record { line, .. }) => assert_eq!(line, 21),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn breakdown_stats() {
        let b = latency_breakdown(&sample());
        assert_eq!(b.end_to_end.count, 20);
        assert!((b.end_to_end.max - 0.059).abs() < 1e-12);
        assert!((b.end_to_end.p95 - 0.058).abs() < 1e-12);
        assert!((b.lift.mean - 0.005).abs() < 1e-12);
        assert_eq!(b.dropped_frames, 3);
        assert!(b.measured_rtt.is_none());
        let s = StageStats::from_samples(&(1..=100).map(f64::from).collect::<Vec<_>>());
        assert_eq!((s.p95, s.max, s.mean), (95.0, 100.0, 50.5));
        assert!(b.to_markdown().contains("| end-to-end | 20 |"));
    }
}
