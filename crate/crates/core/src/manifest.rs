//! Task definitions, label vocabularies and CSV dataset manifests.
//!
//! A manifest is a UTF-8 CSV file with the header `image_path,labels`. The
//! `labels` cell holds one or more `;`-separated label names which are
//! matched against the task vocabulary case-insensitively after trimming.
//! Relative image paths are resolved against the manifest's directory.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::Transform;

/// Placeholder used for the eleventh task3 label until a name is configured.
pub const TASK3_PLACEHOLDER_LABEL: &str = "label_11";

const TASK1_LABELS: [&str; 3] = ["negative", "positive", "neutral"];
const TASK2_LABELS: [&str; 7] = ["joy", "sadness", "fear", "disgust", "anger", "surprise", "neutral"];
const TASK3_NAMED_LABELS: [&str; 10] = [
    "anger",
    "anxiety",
    "craving",
    "empathetic_pain",
    "fear",
    "horror",
    "joy",
    "relief",
    "sadness",
    "surprise",
];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("unknown task id `{0}` (expected task1, task2 or task3)")]
    UnknownTask(String),
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("manifest not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: csv error: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: expected header `image_path,labels`, found `{found}`", path.display())]
    BadHeader { path: PathBuf, found: String },
    #[error("line {line}: expected {expected} columns, found {found}")]
    MalformedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: empty image path")]
    EmptyPath { line: u64 },
    #[error("line {line}: unknown label `{token}`")]
    UnknownLabel { line: u64, token: String },
    #[error("line {line}: empty label field")]
    EmptyLabels { line: u64 },
    #[error("line {line}: single-label task expects exactly one label, found {count}")]
    TooManyLabels { line: u64, count: usize },
    #[error("record `{path}`: {reason}")]
    InvalidRecord { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Task1,
    Task2,
    Task3,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Task1, TaskId::Task2, TaskId::Task3];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Task1 => "task1",
            TaskId::Task2 => "task2",
            TaskId::Task3 => "task3",
        }
    }

    fn expected_shape(self) -> (LabelMode, usize) {
        match self {
            TaskId::Task1 => (LabelMode::SingleLabel, 3),
            TaskId::Task2 => (LabelMode::MultiLabel, 7),
            TaskId::Task3 => (LabelMode::MultiLabel, 11),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "task1" => Ok(TaskId::Task1),
            "task2" => Ok(TaskId::Task2),
            "task3" => Ok(TaskId::Task3),
            _ => Err(ManifestError::UnknownTask(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    SingleLabel,
    MultiLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Task identity, ordered label vocabulary and labelling mode.
///
/// The label order fixes the index of each component of a model's output
/// vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTaskSpec")]
pub struct TaskSpec {
    task_id: TaskId,
    labels: Vec<String>,
    mode: LabelMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTaskSpec {
    task_id: TaskId,
    labels: Vec<String>,
    mode: LabelMode,
}

impl TryFrom<RawTaskSpec> for TaskSpec {
    type Error = ManifestError;

    fn try_from(raw: RawTaskSpec) -> Result<Self, Self::Error> {
        TaskSpec::new(raw.task_id, raw.labels, raw.mode)
    }
}

impl TaskSpec {
    pub fn new(task_id: TaskId, labels: Vec<String>, mode: LabelMode) -> Result<Self, ManifestError> {
        let (expected_mode, expected_len) = task_id.expected_shape();
        if mode != expected_mode {
            return Err(ManifestError::InvalidSpec(format!(
                "{task_id} must be {expected_mode:?}, got {mode:?}"
            )));
        }
        if labels.len() != expected_len {
            return Err(ManifestError::InvalidSpec(format!(
                "{task_id} needs exactly {expected_len} labels, got {}",
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            let key = normalize_label(label);
            if key.is_empty() || key.contains(';') || key.contains(',') {
                return Err(ManifestError::InvalidSpec(format!("invalid label name `{label}`")));
            }
            if !seen.insert(key) {
                return Err(ManifestError::InvalidSpec(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { task_id, labels, mode })
    }

    /// The canonical spec for `task_id`. Task 3 carries the placeholder
    /// [`TASK3_PLACEHOLDER_LABEL`] as its eleventh label.
    pub fn builtin(task_id: TaskId) -> Self {
        let labels: Vec<String> = match task_id {
            TaskId::Task1 => TASK1_LABELS.iter().map(|s| s.to_string()).collect(),
            TaskId::Task2 => TASK2_LABELS.iter().map(|s| s.to_string()).collect(),
            TaskId::Task3 => TASK3_NAMED_LABELS
                .iter()
                .copied()
                .chain(std::iter::once(TASK3_PLACEHOLDER_LABEL))
                .map(str::to_string)
                .collect(),
        };
        let (mode, _) = task_id.expected_shape();
        Self { task_id, labels, mode }
    }

    /// Canonical spec with the eleventh task3 label renamed. Other tasks
    /// ignore `extra_label`.
    pub fn builtin_with_extra_label(task_id: TaskId, extra_label: Option<&str>) -> Result<Self, ManifestError> {
        let mut spec = Self::builtin(task_id);
        if let (TaskId::Task3, Some(name)) = (task_id, extra_label) {
            let mut labels = spec.labels;
            labels[10] = name.trim().to_string();
            spec = Self::new(task_id, labels, spec.mode)?;
        }
        Ok(spec)
    }

    pub fn task_id(&self) -> TaskId {
        self.task_id
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Index of `token`, compared case-insensitively with surrounding
    /// whitespace removed.
    pub fn label_index(&self, token: &str) -> Option<usize> {
        let key = normalize_label(token);
        self.labels.iter().position(|l| normalize_label(l) == key)
    }

    pub fn label_names(&self, set: &BTreeSet<usize>) -> Vec<&str> {
        set.iter().map(|&i| self.label(i)).collect()
    }
}

fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Looks up the canonical spec for a task id given as text.
pub fn builtin_task_spec(task_id: &str) -> Result<TaskSpec, ManifestError> {
    Ok(TaskSpec::builtin(task_id.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Upsampled,
    Augmented,
}

/// One image and its label set. Labels are vocabulary indices of the owning
/// dataset's [`TaskSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_path: String,
    pub labels: BTreeSet<usize>,
    pub origin: Origin,
    /// Geometric transforms applied at batch time, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<Transform>,
}

impl ImageRecord {
    pub fn new(image_path: impl Into<String>, labels: impl IntoIterator<Item = usize>) -> Self {
        Self {
            image_path: image_path.into(),
            labels: labels.into_iter().collect(),
            origin: Origin::Original,
            transforms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub records: Vec<ImageRecord>,
    pub split: Split,
    /// Directory that relative image paths are resolved against.
    pub root: PathBuf,
    /// False for prediction-only manifests whose label cells may be empty.
    pub ground_truth: bool,
}

impl Dataset {
    /// Builds a ground-truth dataset, checking every record against the
    /// spec's vocabulary and mode.
    pub fn from_records(
        spec: TaskSpec,
        split: Split,
        root: impl Into<PathBuf>,
        records: Vec<ImageRecord>,
    ) -> Result<Self, ManifestError> {
        let ds = Self {
            spec,
            records,
            split,
            root: root.into(),
            ground_truth: true,
        };
        for r in &ds.records {
            ds.check_record(r)?;
        }
        Ok(ds)
    }

    /// Same dataset description with a different record list.
    pub fn with_records(&self, records: Vec<ImageRecord>) -> Self {
        Self {
            spec: self.spec.clone(),
            records,
            split: self.split,
            root: self.root.clone(),
            ground_truth: self.ground_truth,
        }
    }

    fn check_record(&self, r: &ImageRecord) -> Result<(), ManifestError> {
        let bad = |reason: String| ManifestError::InvalidRecord {
            path: r.image_path.clone(),
            reason,
        };
        if let Some(&i) = r.labels.iter().find(|&&i| i >= self.spec.num_labels()) {
            return Err(bad(format!("label index {i} outside vocabulary")));
        }
        if self.ground_truth && r.labels.is_empty() {
            return Err(bad("no labels".into()));
        }
        if self.spec.mode() == LabelMode::SingleLabel && r.labels.len() > 1 {
            return Err(bad(format!("{} labels in a single-label task", r.labels.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of records carrying each label, in vocabulary order.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.spec.num_labels()];
        for r in &self.records {
            for &l in &r.labels {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Per-label record counts keyed by label name, in vocabulary order.
    pub fn label_counts(&self) -> IndexMap<String, usize> {
        self.spec.labels().iter().cloned().zip(self.counts()).collect()
    }

    pub fn resolve_path(&self, record: &ImageRecord) -> PathBuf {
        let p = Path::new(&record.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Image paths that occur more than once, in first-seen order.
    pub fn duplicate_paths(&self) -> Vec<&str> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut dups = Vec::new();
        for r in &self.records {
            let n = seen.entry(r.image_path.as_str()).or_insert(0);
            *n += 1;
            if *n == 2 {
                dups.push(r.image_path.as_str());
            }
        }
        dups
    }

    /// Serializes the records back into manifest CSV.
    pub fn to_manifest_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(["image_path", "labels"]).expect("in-memory write");
        for r in &self.records {
            let labels = self.spec.label_names(&r.labels).join(";");
            w.write_record([r.image_path.as_str(), labels.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn write_manifest(&self, path: &Path) -> Result<(), ManifestError> {
        std::fs::write(path, self.to_manifest_string()).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Free-function form of [`Dataset::label_counts`].
pub fn label_counts(ds: &Dataset) -> IndexMap<String, usize> {
    ds.label_counts()
}

/// Loads a ground-truth manifest. Every row needs at least one label, and
/// exactly one in single-label tasks.
pub fn load_manifest(path: &Path, spec: &TaskSpec, split: Split) -> Result<Dataset, ManifestError> {
    load(path, spec, split, true)
}

/// Loads a manifest whose `labels` column may be empty or absent, as used
/// for prediction inputs. Labels that are present are still validated.
pub fn load_unlabeled_manifest(path: &Path, spec: &TaskSpec, split: Split) -> Result<Dataset, ManifestError> {
    load(path, spec, split, false)
}

/// Parses ground-truth manifest text that did not come from a file, such
/// as a pasted CSV. Relative image paths resolve against the working
/// directory.
pub fn parse_manifest_str(text: &str, spec: &TaskSpec, split: Split) -> Result<Dataset, ManifestError> {
    let records = parse_manifest(Path::new("<input>"), text, spec, true)?;
    Ok(Dataset {
        spec: spec.clone(),
        records,
        split,
        root: PathBuf::new(),
        ground_truth: true,
    })
}

fn load(path: &Path, spec: &TaskSpec, split: Split, ground_truth: bool) -> Result<Dataset, ManifestError> {
    if !path.exists() {
        return Err(ManifestError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let records = parse_manifest(path, &text, spec, ground_truth)?;
    let ds = Dataset {
        spec: spec.clone(),
        records,
        split,
        root,
        ground_truth,
    };
    for dup in ds.duplicate_paths() {
        log::warn!("{}: duplicate image path `{dup}`", path.display());
    }
    Ok(ds)
}

fn parse_manifest(
    path: &Path,
    text: &str,
    spec: &TaskSpec,
    ground_truth: bool,
) -> Result<Vec<ImageRecord>, ManifestError> {
    let csv_err = |source| ManifestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?.clone();
    let header_cols: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    let expected = match header_cols.as_slice() {
        [a, b] if a == "image_path" && b == "labels" => 2,
        [a] if a == "image_path" && !ground_truth => 1,
        _ => {
            return Err(ManifestError::BadHeader {
                path: path.to_path_buf(),
                found: header.iter().collect::<Vec<_>>().join(","),
            })
        }
    };

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        // Prediction manifests may omit the trailing empty labels cell.
        let unlabeled_short = !ground_truth && expected == 2 && row.len() == 1;
        if row.len() != expected && !unlabeled_short {
            return Err(ManifestError::MalformedRow {
                line,
                expected,
                found: row.len(),
            });
        }
        let image_path = row.get(0).unwrap_or_default();
        if image_path.is_empty() {
            return Err(ManifestError::EmptyPath { line });
        }
        let cell = row.get(1).unwrap_or_default();
        let mut labels = BTreeSet::new();
        for token in cell.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let idx = spec.label_index(token).ok_or_else(|| ManifestError::UnknownLabel {
                line,
                token: token.to_string(),
            })?;
            labels.insert(idx);
        }
        if labels.is_empty() && ground_truth {
            return Err(ManifestError::EmptyLabels { line });
        }
        if spec.mode() == LabelMode::SingleLabel && labels.len() > 1 {
            return Err(ManifestError::TooManyLabels {
                line,
                count: labels.len(),
            });
        }
        records.push(ImageRecord::new(image_path, labels));
    }
    Ok(records)
}
