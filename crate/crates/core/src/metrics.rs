//! Class-wise 3D IoU@τ and mSPA@τ scoring with greedy matching.
//!
//! Headline numbers are recall-style: the fraction of ground-truth objects
//! whose matched prediction clears the threshold. The spatial position
//! accuracy (SPA) used for mSPA is our own definition — normalized center
//! error against half the ground-truth diagonal — since no formula is
//! available for it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou3d, Box3D, Detection3D, ObjectClass};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("no IoU thresholds configured")]
    NoThresholds,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {msg}")]
    Parse { row: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub iou_thresholds: Vec<f64>,
    pub spa_threshold: f64,
    pub classes: Vec<ObjectClass>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { iou_thresholds: vec![0.25, 0.5], spa_threshold: 0.70, classes: ObjectClass::ALL.to_vec() }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.iou_thresholds.is_empty() {
            return Err(MetricsError::NoThresholds);
        }
        for &t in self.iou_thresholds.iter().chain(std::iter::once(&self.spa_threshold)) {
            if !(t > 0.0 && t <= 1.0) {
                return Err(MetricsError::Threshold(t));
            }
        }
        Ok(())
    }
}

/// Normalized center accuracy: 1 at the GT center, 0 at half the GT diagonal
/// or beyond.
pub fn spa(pred: &Box3D, gt: &Box3D) -> f64 {
    let dist = (pred.center - gt.center).norm();
    1.0 - (dist / (0.5 * gt.dims.norm())).min(1.0)
}

/// Per-class (or averaged) scores. Vectors are indexed like
/// [`MetricsReport::iou_thresholds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub mspa: f64,
    /// Mean matched IoU over GT objects, unmatched ones counting 0.
    pub mean_iou: f64,
    /// Like `mean_iou`, but matches below each IoU threshold also count 0.
    pub iou_at: Vec<f64>,
    pub n_gt: f64,
    pub n_pred: f64,
}

impl Scores {
    fn zeros(n: usize) -> Self {
        Self {
            recall: vec![0.0; n],
            precision: vec![0.0; n],
            mspa: 0.0,
            mean_iou: 0.0,
            iou_at: vec![0.0; n],
            n_gt: 0.0,
            n_pred: 0.0,
        }
    }

    fn add_scaled(&mut self, other: &Scores, k: f64) {
        for (a, b) in self.recall.iter_mut().zip(&other.recall) {
            *a += k * b;
        }
        for (a, b) in self.precision.iter_mut().zip(&other.precision) {
            *a += k * b;
        }
        for (a, b) in self.iou_at.iter_mut().zip(&other.iou_at) {
            *a += k * b;
        }
        self.mspa += k * other.mspa;
        self.mean_iou += k * other.mean_iou;
        self.n_gt += k * other.n_gt;
        self.n_pred += k * other.n_pred;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou_thresholds: Vec<f64>,
    pub spa_threshold: f64,
    /// Classes with at least one GT object, in configuration order.
    pub classes: Vec<(ObjectClass, Scores)>,
}

impl MetricsReport {
    pub fn empty(cfg: &MetricsConfig) -> Self {
        Self { iou_thresholds: cfg.iou_thresholds.clone(), spa_threshold: cfg.spa_threshold, classes: Vec::new() }
    }

    /// Mean of the per-class entries.
    pub fn average(&self) -> Scores {
        let mut avg = Scores::zeros(self.iou_thresholds.len());
        if self.classes.is_empty() {
            return avg;
        }
        let k = 1.0 / self.classes.len() as f64;
        for (_, s) in &self.classes {
            avg.add_scaled(s, k);
        }
        avg
    }

    pub fn class(&self, class: ObjectClass) -> Option<&Scores> {
        self.classes.iter().find(|(c, _)| *c == class).map(|(_, s)| s)
    }

    fn threshold_index(&self, tau: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|t| (t - tau).abs() < 1e-12)
    }

    /// Class-averaged recall at IoU threshold `tau` (must be configured).
    pub fn mean_recall(&self, tau: f64) -> Option<f64> {
        self.threshold_index(tau).map(|i| self.average().recall[i])
    }

    /// Class-averaged thresholded mean IoU at `tau` (must be configured).
    pub fn mean_iou_at(&self, tau: f64) -> Option<f64> {
        self.threshold_index(tau).map(|i| self.average().iou_at[i])
    }

    /// Entry-wise mean of several reports over the same thresholds. A class's
    /// entry is averaged over the reports it appears in.
    pub fn mean_of(reports: &[MetricsReport], cfg: &MetricsConfig) -> MetricsReport {
        let n = cfg.iou_thresholds.len();
        let mut out = MetricsReport::empty(cfg);
        for class in &cfg.classes {
            let present: Vec<&Scores> = reports.iter().filter_map(|r| r.class(*class)).collect();
            if present.is_empty() {
                continue;
            }
            let mut s = Scores::zeros(n);
            let k = 1.0 / present.len() as f64;
            for p in present {
                s.add_scaled(p, k);
            }
            out.classes.push((*class, s));
        }
        out
    }

    /// Long-format CSV: `class,metric,threshold,value`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "metric", "threshold", "value"]).expect("in-memory write");
        let avg = self.average();
        let tail = (!self.classes.is_empty()).then_some(("average", &avg));
        let rows = self.classes.iter().map(|(c, s)| (c.name(), s)).chain(tail);
        for (name, s) in rows {
            let mut put = |metric: &str, thr: Option<f64>, v: f64| {
                let thr = thr.map(|t| t.to_string()).unwrap_or_default();
                w.write_record([name, metric, &thr, &v.to_string()]).expect("in-memory write");
            };
            for (t, v) in self.iou_thresholds.iter().zip(&s.recall) {
                put("recall", Some(*t), *v);
            }
            for (t, v) in self.iou_thresholds.iter().zip(&s.precision) {
                put("precision", Some(*t), *v);
            }
            for (t, v) in self.iou_thresholds.iter().zip(&s.iou_at) {
                put("iou_at", Some(*t), *v);
            }
            put("mspa", Some(self.spa_threshold), s.mspa);
            put("mean_iou", None, s.mean_iou);
            put("n_gt", None, s.n_gt);
            put("n_pred", None, s.n_pred);
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Parses [`Self::to_csv`] output. The `average` rows are recomputed, not read.
    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut report = MetricsReport { iou_thresholds: Vec::new(), spa_threshold: 0.0, classes: Vec::new() };
        let mut rows: Vec<(ObjectClass, String, Option<f64>, f64)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let err = |msg: String| MetricsError::Parse { row, msg };
            if rec.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", rec.len())));
            }
            if &rec[0] == "average" {
                continue;
            }
            let class = ObjectClass::from_name(&rec[0]).ok_or_else(|| err(format!("unknown class {:?}", &rec[0])))?;
            let thr =
                if rec[2].is_empty() { None } else { Some(rec[2].parse::<f64>().map_err(|e| err(e.to_string()))?) };
            let value = rec[3].parse::<f64>().map_err(|e| err(e.to_string()))?;
            if &rec[1] == "recall" {
                let t = thr.ok_or_else(|| err("recall row without threshold".into()))?;
                if !report.iou_thresholds.contains(&t) {
                    report.iou_thresholds.push(t);
                }
            }
            if &rec[1] == "mspa" {
                report.spa_threshold = thr.ok_or_else(|| err("mspa row without threshold".into()))?;
            }
            rows.push((class, rec[1].to_string(), thr, value));
        }
        let n = report.iou_thresholds.len();
        for (class, metric, thr, value) in rows {
            let idx = match report.classes.iter().position(|(c, _)| *c == class) {
                Some(i) => i,
                None => {
                    report.classes.push((class, Scores::zeros(n)));
                    report.classes.len() - 1
                }
            };
            let s = &mut report.classes[idx].1;
            let ti = thr.and_then(|t| report.iou_thresholds.iter().position(|x| *x == t));
            match (metric.as_str(), ti) {
                ("recall", Some(i)) => s.recall[i] = value,
                ("precision", Some(i)) => s.precision[i] = value,
                ("iou_at", Some(i)) => s.iou_at[i] = value,
                ("mspa", _) => s.mspa = value,
                ("mean_iou", _) => s.mean_iou = value,
                ("n_gt", _) => s.n_gt = value,
                ("n_pred", _) => s.n_pred = value,
                (m, _) => return Err(MetricsError::Parse { row: 0, msg: format!("unknown metric {m:?}") }),
            }
        }
        Ok(report)
    }

    /// Markdown table: one row per metric, one column per class then `average`.
    /// Values are percentages.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| metric |");
        for (c, _) in &self.classes {
            let _ = write!(out, " {c} |");
        }
        out.push_str(" average |\n|---|");
        for _ in 0..=self.classes.len() {
            out.push_str("---:|");
        }
        out.push('\n');
        if self.classes.is_empty() {
            return out;
        }
        let avg = self.average();
        let cols: Vec<&Scores> = self.classes.iter().map(|(_, s)| s).chain(std::iter::once(&avg)).collect();
        let mut row = |label: String, f: &dyn Fn(&Scores) -> f64| {
            let _ = write!(out, "| {label} |");
            for s in &cols {
                let _ = write!(out, " {:.1} |", 100.0 * f(s));
            }
            out.push('\n');
        };
        for (i, t) in self.iou_thresholds.iter().enumerate() {
            row(format!("IoU@{t}"), &|s| s.recall[i]);
        }
        row(format!("mSPA@{}", self.spa_threshold), &|s| s.mspa);
        row("mean IoU".into(), &|s| s.mean_iou);
        for (i, t) in self.iou_thresholds.iter().enumerate() {
            row(format!("mean IoU (≥{t})"), &|s| s.iou_at[i]);
        }
        out
    }
}

/// Greedy per-class pairing. Predictions are visited by descending
/// confidence (input order on ties) and each takes the unmatched GT with the
/// highest positive IoU (lowest index on ties). Returns, per GT, the matched
/// prediction index and IoU.
pub fn greedy_match(preds: &[&Box3D], confidences: &[f64], gts: &[&Box3D]) -> Vec<Option<(usize, f64)>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    let mut matched: Vec<Option<(usize, f64)>> = vec![None; gts.len()];
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if matched[g].is_some() {
                continue;
            }
            let iou = iou3d(preds[p], gt);
            if iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            matched[g] = Some((p, iou));
        }
    }
    matched
}

pub fn match_and_score(preds: &[Detection3D], gts: &[(ObjectClass, Box3D)], cfg: &MetricsConfig) -> MetricsReport {
    let mut report = MetricsReport::empty(cfg);
    for &class in &cfg.classes {
        let g: Vec<&Box3D> = gts.iter().filter(|(c, _)| *c == class).map(|(_, b)| b).collect();
        if g.is_empty() {
            continue;
        }
        let p: Vec<&Detection3D> = preds.iter().filter(|d| d.class == class).collect();
        let boxes: Vec<&Box3D> = p.iter().map(|d| &d.box3d).collect();
        let conf: Vec<f64> = p.iter().map(|d| d.confidence).collect();
        let matched = greedy_match(&boxes, &conf, &g);

        let n_gt = g.len() as f64;
        let mut s = Scores::zeros(cfg.iou_thresholds.len());
        s.n_gt = n_gt;
        s.n_pred = p.len() as f64;
        for (gi, m) in matched.iter().enumerate() {
            let Some((pi, iou)) = *m else { continue };
            s.mean_iou += iou / n_gt;
            for (k, t) in cfg.iou_thresholds.iter().enumerate() {
                if iou >= *t {
                    s.recall[k] += 1.0;
                    s.iou_at[k] += iou / n_gt;
                }
            }
            if spa(boxes[pi], g[gi]) >= cfg.spa_threshold {
                s.mspa += 1.0;
            }
        }
        for k in 0..cfg.iou_thresholds.len() {
            s.precision[k] = if p.is_empty() { 0.0 } else { s.recall[k] / p.len() as f64 };
            s.recall[k] /= n_gt;
        }
        s.mspa /= n_gt;
        report.classes.push((class, s));
    }
    report
}
