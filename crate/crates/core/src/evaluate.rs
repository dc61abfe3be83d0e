//! Score decoding and the support-weighted F1 metric.
//!
//! Per-label counts are one-vs-rest over records. A label's F1 is weighted
//! by its ground-truth support; labels without support stay in the report
//! with zero weight so report schemas do not depend on the split.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Dataset, LabelMode, ManifestError, TaskId, TaskSpec};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score vector has {found} entries, vocabulary has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("predictions do not cover the ground truth: missing [{}], extra [{}]", missing.join(", "), extra.join(", "))]
    Coverage { missing: Vec<String>, extra: Vec<String> },
    #[error("threshold sweep needs a multi-label task")]
    NotMultiLabel,
    #[error("{0} score vectors for {1} records")]
    ScoreCount(usize, usize),
    #[error("predictions line {line}: {reason}")]
    BadPredictionRow { line: u64, reason: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Decoding policy for score vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeOptions {
    pub threshold: f64,
    /// Force the argmax label into otherwise empty multi-label decodings.
    pub fallback_top1: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            fallback_top1: false,
        }
    }
}

fn argmax(scores: &[f64]) -> usize {
    // First maximum wins, so ties go to the lowest index.
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Decodes with default options (threshold 0.5, no top-1 fallback).
pub fn decode(
    scores: &[f64],
    mode: LabelMode,
    num_labels: usize,
    threshold: f64,
) -> Result<BTreeSet<usize>, EvalError> {
    decode_with(
        scores,
        mode,
        num_labels,
        &DecodeOptions {
            threshold,
            fallback_top1: false,
        },
    )
}

pub fn decode_with(
    scores: &[f64],
    mode: LabelMode,
    num_labels: usize,
    opts: &DecodeOptions,
) -> Result<BTreeSet<usize>, EvalError> {
    if scores.len() != num_labels || num_labels == 0 {
        return Err(EvalError::LengthMismatch {
            expected: num_labels,
            found: scores.len(),
        });
    }
    match mode {
        LabelMode::SingleLabel => Ok(BTreeSet::from([argmax(scores)])),
        LabelMode::MultiLabel => {
            if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
                return Err(EvalError::BadThreshold(opts.threshold));
            }
            let mut set: BTreeSet<usize> = scores
                .iter()
                .enumerate()
                .filter(|(_, &s)| s >= opts.threshold)
                .map(|(i, _)| i)
                .collect();
            if set.is_empty() && opts.fallback_top1 {
                set.insert(argmax(scores));
            }
            Ok(set)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_path: String,
    pub scores: Vec<f64>,
    pub decoded: BTreeSet<usize>,
}

impl PredictionRecord {
    pub fn from_scores(
        image_path: impl Into<String>,
        scores: Vec<f64>,
        spec: &TaskSpec,
        opts: &DecodeOptions,
    ) -> Result<Self, EvalError> {
        let decoded = decode_with(&scores, spec.mode(), spec.num_labels(), opts)?;
        Ok(Self {
            image_path: image_path.into(),
            scores,
            decoded,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task_id: TaskId,
    pub per_label: IndexMap<String, LabelMetrics>,
    pub weighted_f1: f64,
    pub record_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl MetricsReport {
    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-label metrics and the support-weighted F1 for aligned truth and
/// prediction label sets.
pub fn score_label_sets(
    num_labels: usize,
    truth: &[BTreeSet<usize>],
    predicted: &[BTreeSet<usize>],
) -> (Vec<LabelMetrics>, f64) {
    assert_eq!(truth.len(), predicted.len(), "truth and predictions must align");
    let mut tp = vec![0usize; num_labels];
    let mut fp = vec![0usize; num_labels];
    let mut fn_ = vec![0usize; num_labels];
    for (t, p) in truth.iter().zip(predicted) {
        for &l in t.intersection(p) {
            tp[l] += 1;
        }
        for &l in p.difference(t) {
            fp[l] += 1;
        }
        for &l in t.difference(p) {
            fn_[l] += 1;
        }
    }
    let per_label: Vec<LabelMetrics> = (0..num_labels)
        .map(|l| {
            let precision = ratio(tp[l], tp[l] + fp[l]);
            let recall = ratio(tp[l], tp[l] + fn_[l]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            LabelMetrics {
                precision,
                recall,
                f1,
                support: tp[l] + fn_[l],
            }
        })
        .collect();
    let total: usize = per_label.iter().map(|m| m.support).sum();
    let weighted = if total == 0 {
        0.0
    } else {
        per_label.iter().map(|m| m.support as f64 * m.f1).sum::<f64>() / total as f64
    };
    (per_label, weighted)
}

fn check_coverage<'a>(
    truth: &'a Dataset,
    preds: &'a [PredictionRecord],
) -> Result<HashMap<&'a str, &'a PredictionRecord>, EvalError> {
    let by_path: HashMap<&str, &PredictionRecord> =
        preds.iter().map(|p| (p.image_path.as_str(), p)).collect();
    let truth_paths: BTreeSet<&str> = truth.records.iter().map(|r| r.image_path.as_str()).collect();
    let missing: Vec<String> = truth_paths
        .iter()
        .filter(|p| !by_path.contains_key(*p))
        .map(|p| p.to_string())
        .collect();
    let mut extra: Vec<String> = by_path
        .keys()
        .filter(|p| !truth_paths.contains(*p))
        .map(|p| p.to_string())
        .collect();
    extra.sort();
    if !missing.is_empty() || !extra.is_empty() || by_path.len() != preds.len() {
        let mut seen = BTreeSet::new();
        let dup: Vec<String> = preds
            .iter()
            .filter(|p| !seen.insert(p.image_path.as_str()))
            .map(|p| format!("{} (duplicate)", p.image_path))
            .collect();
        extra.extend(dup);
        return Err(EvalError::Coverage { missing, extra });
    }
    Ok(by_path)
}

/// Weighted F1 of `preds` against `truth`, matched by image path.
///
/// Predictions must cover the set of ground-truth paths exactly, with one
/// prediction per path.
pub fn weighted_f1(truth: &Dataset, preds: &[PredictionRecord]) -> Result<MetricsReport, EvalError> {
    let by_path = check_coverage(truth, preds)?;
    let num_labels = truth.spec.num_labels();
    let truth_sets: Vec<BTreeSet<usize>> = truth.records.iter().map(|r| r.labels.clone()).collect();
    let mut pred_sets = Vec::with_capacity(truth.len());
    for r in &truth.records {
        let p = by_path[r.image_path.as_str()];
        if p.scores.len() != num_labels && !p.scores.is_empty() {
            return Err(EvalError::LengthMismatch {
                expected: num_labels,
                found: p.scores.len(),
            });
        }
        if let Some(&bad) = p.decoded.iter().find(|&&l| l >= num_labels) {
            return Err(EvalError::LengthMismatch {
                expected: num_labels,
                found: bad + 1,
            });
        }
        pred_sets.push(p.decoded.clone());
    }
    let (per_label, weighted) = score_label_sets(num_labels, &truth_sets, &pred_sets);
    Ok(MetricsReport {
        task_id: truth.spec.task_id(),
        per_label: truth
            .spec
            .labels()
            .iter()
            .cloned()
            .zip(per_label)
            .collect(),
        weighted_f1: weighted,
        record_count: truth.len(),
        threshold: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Grid value with the highest weighted F1, smallest threshold on ties.
    pub best_threshold: f64,
    pub best_weighted_f1: f64,
}

/// Weighted F1 at every grid threshold. `scores[i]` belongs to
/// `truth.records[i]`.
pub fn sweep_threshold(truth: &Dataset, scores: &[Vec<f64>], grid: &[f64]) -> Result<SweepReport, EvalError> {
    if truth.spec.mode() != LabelMode::MultiLabel {
        return Err(EvalError::NotMultiLabel);
    }
    let truth_sets: Vec<BTreeSet<usize>> = truth.records.iter().map(|r| r.labels.clone()).collect();
    sweep_label_sets(truth.spec.num_labels(), &truth_sets, scores, grid)
}

/// [`sweep_threshold`] over bare label sets.
pub fn sweep_label_sets(
    num_labels: usize,
    truth: &[BTreeSet<usize>],
    scores: &[Vec<f64>],
    grid: &[f64],
) -> Result<SweepReport, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if scores.len() != truth.len() {
        return Err(EvalError::ScoreCount(scores.len(), truth.len()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &t in grid {
        let decoded = scores
            .iter()
            .map(|s| decode(s, LabelMode::MultiLabel, num_labels, t))
            .collect::<Result<Vec<_>, _>>()?;
        let (_, w) = score_label_sets(num_labels, truth, &decoded);
        points.push(SweepPoint {
            threshold: t,
            weighted_f1: w,
        });
    }
    let best = points
        .iter()
        .fold(None::<&SweepPoint>, |best, p| match best {
            Some(b) if b.weighted_f1 > p.weighted_f1 => Some(b),
            Some(b) if b.weighted_f1 == p.weighted_f1 && b.threshold <= p.threshold => Some(b),
            _ => Some(p),
        })
        .expect("grid is non-empty");
    Ok(SweepReport {
        best_threshold: best.threshold,
        best_weighted_f1: best.weighted_f1,
        points,
    })
}

/// Evenly spaced thresholds `step, 2*step, ...` strictly inside (0, 1).
pub fn default_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (1..n).map(|i| (i as f64 * step * 1e6).round() / 1e6).collect()
}

/// Writes predictions as CSV `image_path,scores,decoded`.
pub fn write_predictions(path: &Path, spec: &TaskSpec, preds: &[PredictionRecord]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_path", "scores", "decoded"])?;
    for p in preds {
        let scores = p
            .scores
            .iter()
            .map(|s| format!("{s}"))
            .collect::<Vec<_>>()
            .join(";");
        let decoded = spec.label_names(&p.decoded).join(";");
        w.write_record([p.image_path.as_str(), scores.as_str(), decoded.as_str()])?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn read_predictions(path: &Path, spec: &TaskSpec) -> Result<Vec<PredictionRecord>, EvalError> {
    if !path.exists() {
        return Err(EvalError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "predictions file not found"),
        });
    }
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_ascii_lowercase).collect();
    if header != ["image_path", "scores", "decoded"] {
        return Err(EvalError::BadPredictionRow {
            line: 1,
            reason: format!("expected header image_path,scores,decoded, found {}", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| EvalError::BadPredictionRow { line, reason };
        if row.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", row.len())));
        }
        let scores = row[1]
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("score `{s}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if scores.len() != spec.num_labels() {
            return Err(bad(format!(
                "{} scores for a {}-label vocabulary",
                scores.len(),
                spec.num_labels()
            )));
        }
        let mut decoded = BTreeSet::new();
        for token in row[2].split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let idx = spec
                .label_index(token)
                .ok_or_else(|| bad(format!("unknown label `{token}`")))?;
            decoded.insert(idx);
        }
        out.push(PredictionRecord {
            image_path: row[0].to_string(),
            scores,
            decoded,
        });
    }
    Ok(out)
}

/// One cell of a runs-by-tasks results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub run: String,
    pub task: TaskId,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub runs: Vec<RunScore>,
}

const REFERENCE_DEV: [(&str, [f64; 3]); 2] = [("Run 1", [0.714, 0.588, 0.479]), ("Run 2", [0.666, 0.535, 0.479])];
const REFERENCE_TEST: [(&str, [f64; 3]); 2] = [("Run 1", [0.540, 0.572, 0.516]), ("Run 2", [0.526, 0.584, 0.495])];

fn reference_table(title: &str, rows: &[(&str, [f64; 3])]) -> RunTable {
    RunTable {
        title: Some(title.to_string()),
        runs: rows
            .iter()
            .flat_map(|(run, scores)| {
                TaskId::ALL.iter().zip(scores).map(|(&task, &f1)| RunScore {
                    run: run.to_string(),
                    task,
                    weighted_f1: f1,
                })
            })
            .collect(),
    }
}

/// Published development-set scores (Run 1 = Inception-v3, Run 2 = VGG-19).
/// Context for rendering only; not reproducible without the challenge data.
pub fn reference_dev_runs() -> RunTable {
    reference_table("Published development-set F1", &REFERENCE_DEV)
}

/// Published test-set weighted F1 (Run 1 = Inception-v3, Run 2 = VGG-19).
pub fn reference_test_runs() -> RunTable {
    reference_table("Published test-set weighted F1", &REFERENCE_TEST)
}

/// Renders runs as rows and tasks as columns, three decimals per cell.
pub fn render_run_table(table: &RunTable) -> String {
    let mut runs: Vec<&str> = Vec::new();
    for r in &table.runs {
        if !runs.contains(&r.run.as_str()) {
            runs.push(&r.run);
        }
    }
    let tasks: Vec<TaskId> = TaskId::ALL
        .into_iter()
        .filter(|t| table.runs.iter().any(|r| r.task == *t))
        .collect();
    let width = runs.iter().map(|r| r.len()).max().unwrap_or(4).max(4);
    let mut out = String::new();
    if let Some(title) = &table.title {
        let _ = writeln!(out, "{title}");
    }
    let _ = write!(out, "| {:<width$} |", "Runs");
    for t in &tasks {
        let _ = write!(out, " {:>6} |", t.as_str());
    }
    out.push('\n');
    let _ = write!(out, "|{}|", "-".repeat(width + 2));
    for _ in &tasks {
        out.push_str("--------|");
    }
    out.push('\n');
    for run in runs {
        let _ = write!(out, "| {run:<width$} |");
        for t in &tasks {
            match table.runs.iter().find(|r| r.run == run && r.task == *t) {
                Some(r) => {
                    let _ = write!(out, " {:>6.3} |", r.weighted_f1);
                }
                None => out.push_str("      - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Per-label breakdown followed by a one-row summary whose last column is
/// the weighted F1.
pub fn render_metrics_table(run: &str, report: &MetricsReport) -> String {
    let width = report.per_label.keys().map(String::len).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| {:<width$} | precision | recall |     f1 | support |",
        "label"
    );
    let _ = writeln!(out, "|{}|-----------|--------|--------|---------|", "-".repeat(width + 2));
    for (label, m) in &report.per_label {
        let _ = writeln!(
            out,
            "| {label:<width$} | {:>9.3} | {:>6.3} | {:>6.3} | {:>7} |",
            m.precision, m.recall, m.f1, m.support
        );
    }
    out.push('\n');
    let table = RunTable {
        title: None,
        runs: vec![RunScore {
            run: run.to_string(),
            task: report.task_id,
            weighted_f1: report.weighted_f1,
        }],
    };
    out.push_str(&render_run_table(&table));
    out
}
