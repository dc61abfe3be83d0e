//! Fine-tuning runs: configuration, the training loop and run artifacts.
//!
//! Pipeline order is load → balance (train split only) → augment (train
//! split only) → train. After every epoch the dev split, when present, is
//! scored and the best checkpoint by dev weighted F1 is kept.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{augment_dataset, AugmentConfig, AugmentError, SkipReport};
use crate::balance::{upsample, BalanceConfig, BalanceError};
use crate::evaluate::{weighted_f1, DecodeOptions, EvalError, PredictionRecord};
use crate::manifest::{load_manifest, Dataset, LabelMode, ManifestError, Split, TaskSpec};
use crate::model::checkpoint::{save_checkpoint, AdamParams, CheckpointMeta, CHECKPOINT_FORMAT_VERSION};
use crate::model::loss::batch_loss;
use crate::model::{build_model, prepare_input, stack_inputs, BackboneId, HeadMode, ModelConfig, ModelError, SentimentModel};
use crate::seed::{derive_seed, Stream};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error("non-finite training loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f32 },
    #[error("no readable training records")]
    EmptyTrainingSet,
    #[error("failed to write checkpoint {} after retry: {source}", path.display())]
    CheckpointWrite {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TrainError {
    /// Whether the failure comes from bad inputs rather than the run itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            TrainError::Config(_) | TrainError::Manifest(_) | TrainError::Balance(_)
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub task: TaskSpec,
    pub model: ModelConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub adam: AdamParams,
    pub batch_size: usize,
    pub seed: u64,
    pub balance: BalanceConfig,
    pub augment: AugmentConfig,
    pub dev_fraction: f64,
    #[serde(default)]
    pub decode: DecodeOptions,
    /// Records zero wall-clock time in the log so repeated runs produce
    /// byte-identical logs.
    #[serde(default)]
    pub deterministic: bool,
}

impl TrainConfig {
    /// Defaults: 50 epochs of Adam at learning rate 1e-4, batch size 32,
    /// balancing and augmentation on, no dev carve-out.
    pub fn new(task: TaskSpec, backbone: BackboneId, seed: u64) -> Self {
        let model = ModelConfig::for_task(&task, backbone);
        let cfg = Self {
            version: CONFIG_VERSION,
            task,
            model,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            optimizer: OptimizerKind::Adam,
            adam: AdamParams::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            balance: BalanceConfig::default(),
            augment: AugmentConfig::default(),
            dev_fraction: 0.0,
            decode: DecodeOptions::default(),
            deterministic: false,
        };
        cfg.with_seed(seed)
    }

    /// Sets the master seed and re-derives the balance and augment seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.balance.seed = derive_seed(seed, Stream::Balance);
        self.augment.seed = derive_seed(seed, Stream::Augment);
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.version));
        }
        if self.epochs == 0 {
            return bad("at least one epoch required".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return bad(format!("dev_fraction must be in [0, 1), got {}", self.dev_fraction));
        }
        if self.task.mode() == LabelMode::MultiLabel
            && !(self.decode.threshold > 0.0 && self.decode.threshold < 1.0)
        {
            return bad(format!("threshold must be in (0, 1), got {}", self.decode.threshold));
        }
        self.model
            .validate_for(&self.task)
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.balance
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.augment
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a config file body. Unknown keys are errors.
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let body = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(body).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The two experiment presets: Run 1 fine-tunes Inception-v3, Run 2
/// fine-tunes VGG-19, everything else identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Run1,
    Run2,
}

impl Preset {
    pub fn backbone(self) -> BackboneId {
        match self {
            Preset::Run1 => BackboneId::InceptionV3,
            Preset::Run2 => BackboneId::Vgg19,
        }
    }

    pub fn config(self, task: &TaskSpec, seed: u64) -> TrainConfig {
        TrainConfig::new(task.clone(), self.backbone(), seed)
    }
}

pub fn make_run_pair(task: &TaskSpec) -> (TrainConfig, TrainConfig) {
    (Preset::Run1.config(task, 0), Preset::Run2.config(task, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_weighted_f1: Option<f64>,
    pub wall_clock_seconds: f64,
}

/// Run-level summary written to `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub task_id: crate::manifest::TaskId,
    pub backbone: BackboneId,
    pub config_hash: String,
    pub epochs_completed: usize,
    pub best_epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_dev_weighted_f1: Option<f64>,
    pub label_counts_before: IndexMap<String, usize>,
    pub label_counts_after_balance: IndexMap<String, usize>,
    pub train_records_after_augment: usize,
    pub dev_records: usize,
    pub skipped: SkipReport,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub log: Vec<TrainLogEntry>,
    pub meta: RunMeta,
}

pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const META_FILE: &str = "meta.json";
pub const FINAL_CHECKPOINT: &str = "ckpt-final.safetensors";
pub const BEST_CHECKPOINT: &str = "ckpt-best.safetensors";

/// Seeded split stratified by each record's lowest label index. Both parts
/// keep input order.
pub fn stratified_split(ds: &Dataset, dev_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut strata: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        strata.entry(r.labels.first().copied()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_dev = vec![false; ds.len()];
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let take = (dev_fraction * members.len() as f64).round() as usize;
        let take = take.min(members.len().saturating_sub(1));
        for &i in &members[..take] {
            to_dev[i] = true;
        }
    }
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (i, r) in ds.records.iter().enumerate() {
        if to_dev[i] {
            dev.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    let mut dev_ds = ds.with_records(dev);
    dev_ds.split = Split::Dev;
    (ds.with_records(train), dev_ds)
}

/// Decodes and normalizes a batch of records into `[batch, 3, s, s]`.
pub fn batch_tensor(model: &SentimentModel, ds: &Dataset, indices: &[usize]) -> Result<Tensor, TrainError> {
    let backbone = model.config().backbone;
    let norm = backbone.normalization();
    let inputs = indices
        .par_iter()
        .map(|&i| prepare_input(ds, &ds.records[i], backbone, &norm))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(stack_inputs(inputs, backbone.input_size(), model.device())?)
}

fn batch_targets(mode: HeadMode, ds: &Dataset, indices: &[usize], model: &SentimentModel) -> candle_core::Result<Tensor> {
    let k = ds.spec.num_labels();
    match mode {
        HeadMode::Softmax => {
            let classes: Vec<u32> = indices
                .iter()
                .map(|&i| *ds.records[i].labels.first().expect("ground-truth record") as u32)
                .collect();
            Tensor::new(classes, model.device())
        }
        HeadMode::Sigmoid => {
            let mut m = vec![0f32; indices.len() * k];
            for (row, &i) in indices.iter().enumerate() {
                for &l in &ds.records[i].labels {
                    m[row * k + l] = 1.0;
                }
            }
            Tensor::from_vec(m, (indices.len(), k), model.device())
        }
    }
}

/// Scores every record of `ds` in order. Returns the predictions and, for
/// ground-truth datasets, the mean loss.
pub fn predict_dataset(
    model: &SentimentModel,
    ds: &Dataset,
    batch_size: usize,
    decode: &DecodeOptions,
) -> Result<(Vec<PredictionRecord>, Option<f64>), TrainError> {
    let mode = model.config().head_mode;
    let mut preds = Vec::with_capacity(ds.len());
    let mut loss_sum = 0.0;
    let order: Vec<usize> = (0..ds.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let xs = batch_tensor(model, ds, chunk)?;
        let logits = model.forward_logits(&xs, false)?;
        if ds.ground_truth {
            let targets = batch_targets(mode, ds, chunk, model)?;
            let l: f32 = batch_loss(mode, &logits, &targets)?.to_dtype(DType::F32)?.to_scalar()?;
            loss_sum += l as f64 * chunk.len() as f64;
        }
        let scores: Vec<Vec<f32>> = crate::model::loss::activate(mode, &logits)?.to_vec2()?;
        for (&i, s) in chunk.iter().zip(scores) {
            preds.push(PredictionRecord::from_scores(
                ds.records[i].image_path.clone(),
                s.into_iter().map(f64::from).collect(),
                &ds.spec,
                decode,
            )?);
        }
    }
    let mean_loss = (ds.ground_truth && !ds.is_empty()).then(|| loss_sum / ds.len() as f64);
    Ok((preds, mean_loss))
}

/// Weighted F1 of the model on `ds` at the configured decoding.
pub fn score_dataset(
    model: &SentimentModel,
    ds: &Dataset,
    batch_size: usize,
    decode: &DecodeOptions,
) -> Result<(f64, Option<f64>), TrainError> {
    let (preds, loss) = predict_dataset(model, ds, batch_size, decode)?;
    Ok((weighted_f1(ds, &preds)?.weighted_f1, loss))
}

fn write_checkpoint_with_retry(model: &SentimentModel, meta: &CheckpointMeta, path: &Path) -> Result<(), TrainError> {
    match save_checkpoint(model, meta, path) {
        Ok(()) => Ok(()),
        Err(first) => {
            log::warn!("checkpoint write to {} failed ({first}); retrying", path.display());
            save_checkpoint(model, meta, path).map_err(|source| TrainError::CheckpointWrite {
                path: path.to_path_buf(),
                source,
            })
        }
    }
}

/// Loads manifests and trains. Without a dev manifest, a stratified dev
/// split of `dev_fraction` is carved from the training manifest.
pub fn train(
    cfg: &TrainConfig,
    train_manifest: &Path,
    dev_manifest: Option<&Path>,
    run_dir: &Path,
) -> Result<RunArtifacts, TrainError> {
    cfg.validate()?;
    let train_ds = load_manifest(train_manifest, &cfg.task, Split::Train)?;
    let (train_ds, dev_ds) = match dev_manifest {
        Some(p) => (train_ds, Some(load_manifest(p, &cfg.task, Split::Dev)?)),
        None if cfg.dev_fraction > 0.0 => {
            let (t, d) = stratified_split(&train_ds, cfg.dev_fraction, derive_seed(cfg.seed, Stream::Split));
            (t, Some(d))
        }
        None => (train_ds, None),
    };
    train_datasets(cfg, &train_ds, dev_ds.as_ref(), run_dir)
}

/// Balance and augment the training set as configured.
pub fn prepare_training_set(cfg: &TrainConfig, train_ds: &Dataset) -> Result<(Dataset, Dataset, SkipReport), TrainError> {
    let balanced = upsample(train_ds, &cfg.balance)?;
    let (augmented, skipped) = augment_dataset(&balanced, &cfg.augment)?;
    Ok((balanced, augmented, skipped))
}

/// Trains on already-loaded datasets and writes the run directory.
pub fn train_datasets(
    cfg: &TrainConfig,
    train_ds: &Dataset,
    dev_ds: Option<&Dataset>,
    run_dir: &Path,
) -> Result<RunArtifacts, TrainError> {
    cfg.validate()?;
    if train_ds.spec != cfg.task {
        return Err(TrainError::Config("training dataset vocabulary differs from config task".into()));
    }
    std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let config_hash = cfg.hash();
    let config_path = run_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_json()?).map_err(io_err(&config_path))?;

    let (balanced, augmented, skipped) = prepare_training_set(cfg, train_ds)?;
    let mut prepared = augmented;
    if !skipped.is_empty() {
        for s in &skipped.skipped {
            log::warn!("skipping unreadable image {}: {}", s.image_path, s.reason);
        }
        prepared.records.retain(|r| !skipped.contains(&r.image_path));
    }
    if prepared.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }

    let model = build_model(&cfg.model, derive_seed(cfg.seed, Stream::Init))?;
    let params: Vec<_> = model
        .trainable_parameters(cfg.model.freeze_backbone)
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    let mut opt = AdamW::new(
        params,
        ParamsAdamW {
            lr: cfg.learning_rate,
            beta1: cfg.adam.beta1,
            beta2: cfg.adam.beta2,
            eps: cfg.adam.eps,
            weight_decay: 0.0,
        },
    )?;

    let meta_for = |epoch: usize, dev_f1: Option<f64>, weights: &str| CheckpointMeta {
        format_version: CHECKPOINT_FORMAT_VERSION,
        task: cfg.task.clone(),
        backbone: cfg.model.backbone,
        head_mode: cfg.model.head_mode,
        num_outputs: cfg.model.num_outputs,
        head_hidden_units: cfg.model.head_hidden_units,
        freeze_backbone: cfg.model.freeze_backbone,
        input_size: cfg.model.backbone.input_size(),
        normalization: cfg.model.backbone.normalization(),
        decode: cfg.decode,
        learning_rate: cfg.learning_rate,
        adam: cfg.adam,
        config_hash: config_hash.clone(),
        epoch,
        dev_weighted_f1: dev_f1,
        weights: weights.to_string(),
    };

    let log_path = run_dir.join(LOG_FILE);
    let mut log_file = std::fs::File::create(&log_path).map_err(io_err(&log_path))?;
    let best_path = run_dir.join(BEST_CHECKPOINT);
    let final_path = run_dir.join(FINAL_CHECKPOINT);

    let mode = cfg.model.head_mode;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, Stream::Shuffle));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64)> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs = batch_tensor(&model, &prepared, chunk)?;
            let targets = batch_targets(mode, &prepared, chunk, &model)?;
            let logits = model.forward_logits(&xs, true)?;
            let loss = batch_loss(mode, &logits, &targets)?;
            let value: f32 = loss.to_dtype(DType::F32)?.to_scalar()?;
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch + 1,
                    value,
                });
            }
            opt.backward_step(&loss)?;
            loss_sum += value as f64 * chunk.len() as f64;
        }
        let train_loss = loss_sum / prepared.len() as f64;

        let (dev_f1, dev_loss) = match dev_ds {
            Some(dev) if !dev.is_empty() => {
                let (f1, loss) = score_dataset(&model, dev, cfg.batch_size, &cfg.decode)?;
                (Some(f1), loss)
            }
            _ => (None, None),
        };
        let entry = TrainLogEntry {
            epoch,
            train_loss,
            dev_loss,
            dev_weighted_f1: dev_f1,
            wall_clock_seconds: if cfg.deterministic {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        };
        let line = serde_json::to_string(&entry)?;
        writeln!(log_file, "{line}").map_err(io_err(&log_path))?;
        log_file.flush().map_err(io_err(&log_path))?;
        log::info!(
            "epoch {epoch}/{}: train_loss={train_loss:.5}{}",
            cfg.epochs,
            dev_f1.map(|f| format!(" dev_weighted_f1={f:.4}")).unwrap_or_default()
        );
        log.push(entry);

        if let Some(f1) = dev_f1 {
            if best.is_none_or(|(_, b)| f1 > b) {
                best = Some((epoch, f1));
                write_checkpoint_with_retry(&model, &meta_for(epoch, Some(f1), BEST_CHECKPOINT), &best_path)?;
            }
        }
    }

    let last_dev = log.last().and_then(|e| e.dev_weighted_f1);
    write_checkpoint_with_retry(&model, &meta_for(cfg.epochs, last_dev, FINAL_CHECKPOINT), &final_path)?;
    // Without a dev split the last epoch is the best one.
    let best_epoch = match best {
        Some((epoch, _)) => epoch,
        None => {
            write_checkpoint_with_retry(&model, &meta_for(cfg.epochs, None, BEST_CHECKPOINT), &best_path)?;
            cfg.epochs
        }
    };

    let meta = RunMeta {
        task_id: cfg.task.task_id(),
        backbone: cfg.model.backbone,
        config_hash,
        epochs_completed: cfg.epochs,
        best_epoch,
        best_dev_weighted_f1: best.map(|(_, f)| f),
        label_counts_before: train_ds.label_counts(),
        label_counts_after_balance: balanced.label_counts(),
        train_records_after_augment: prepared.len(),
        dev_records: dev_ds.map_or(0, Dataset::len),
        skipped,
    };
    let meta_path = run_dir.join(META_FILE);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(io_err(&meta_path))?;

    Ok(RunArtifacts {
        run_dir: run_dir.to_path_buf(),
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        log_path,
        log,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{ImageRecord, TaskId};

    #[test]
    fn defaults_match_published_setup() {
        let cfg = TrainConfig::new(TaskSpec::builtin(TaskId::Task1), BackboneId::InceptionV3, 0);
        assert_eq!(cfg.epochs, 50);
        assert_eq!(cfg.learning_rate, 0.0001);
        assert_eq!(cfg.optimizer, OptimizerKind::Adam);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.adam, AdamParams::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn run_pair_differs_only_in_backbone() {
        let (a, b) = make_run_pair(&TaskSpec::builtin(TaskId::Task2));
        assert_eq!(a.model.backbone, BackboneId::InceptionV3);
        assert_eq!(b.model.backbone, BackboneId::Vgg19);
        let mut b2 = b.clone();
        b2.model.backbone = BackboneId::InceptionV3;
        b2.model.head_hidden_units = a.model.head_hidden_units;
        assert_eq!(a, b2);
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut cfg = TrainConfig::new(TaskSpec::builtin(TaskId::Task1), BackboneId::Toy, 0);
        cfg.epochs = 0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("at least one epoch"));
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let cfg = TrainConfig::new(TaskSpec::builtin(TaskId::Task3), BackboneId::Toy, 4);
        let text = cfg.to_json().unwrap();
        assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["learning_rtae"] = serde_json::json!(0.1);
        assert!(TrainConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["version"] = serde_json::json!(2);
        assert!(TrainConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn seed_streams_are_isolated() {
        let cfg = TrainConfig::new(TaskSpec::builtin(TaskId::Task1), BackboneId::Toy, 10);
        assert_ne!(cfg.balance.seed, cfg.augment.seed);
        let mut no_aug = cfg.clone();
        no_aug.augment.enabled = false;
        assert_eq!(no_aug.balance, cfg.balance);
        assert_ne!(cfg.hash(), no_aug.hash());
    }

    #[test]
    fn stratified_split_keeps_every_class() {
        let spec = TaskSpec::builtin(TaskId::Task1);
        let records = (0..30).map(|i| ImageRecord::new(format!("{i}.png"), [i % 3])).collect();
        let ds = Dataset::from_records(spec, Split::Train, "", records).unwrap();
        let (train, dev) = stratified_split(&ds, 0.2, 1);
        assert_eq!(train.len() + dev.len(), 30);
        assert_eq!(dev.counts(), vec![2, 2, 2]);
        assert_eq!(dev.split, Split::Dev);
        let (_, again) = stratified_split(&ds, 0.2, 1);
        assert_eq!(dev, again);
    }
}
