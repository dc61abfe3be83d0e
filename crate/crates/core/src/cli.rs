//! Command-line interface: `prepare`, `train`, `predict`, `evaluate` and
//! `report`.
//!
//! Exit codes are 0 on success, 2 on input errors (bad manifests, configs,
//! vocabulary mismatches, coverage errors) and 3 on runtime failures.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, SkipReport};
use crate::balance::upsample;
use crate::evaluate::{
    read_predictions, reference_dev_runs, reference_test_runs, render_metrics_table, render_run_table,
    weighted_f1, write_predictions, DecodeOptions, MetricsReport, PredictionRecord, RunScore, RunTable,
};
use crate::manifest::{load_manifest, load_unlabeled_manifest, LabelMode, Split, TaskId, TaskSpec};
use crate::model::checkpoint::load_checkpoint;
use crate::model::{BackboneId, ModelConfig};
use crate::seed::{derive_seed, Stream};
use crate::train::{self, predict_dataset, stratified_split, Preset, TrainConfig, TrainError, CONFIG_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const RUNS_REGISTRY: &str = "runs.json";

#[derive(Debug, Parser)]
#[command(name = "sentiment", version, about = "Visual sentiment classification of disaster images")]
pub struct Cli {
    /// Task id: task1 (3-way single-label), task2 (7 labels) or task3 (11 labels).
    #[arg(long, global = true)]
    pub task: Option<TaskId>,
    /// Master seed; per-stage seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding run directories, prepared data and reports.
    #[arg(long, global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// Name of the eleventh task3 label, replacing the placeholder.
    #[arg(long, global = true)]
    pub task3_extra_label: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, balance and plan augmentation for a training manifest.
    Prepare(PrepareArgs),
    /// Fine-tune a model and write a run directory.
    Train(TrainArgs),
    /// Score a manifest with a checkpoint and write a predictions CSV.
    Predict(PredictArgs),
    /// Score a predictions CSV against a ground-truth manifest.
    Evaluate(EvaluateArgs),
    /// Render a runs-by-tasks weighted F1 table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataFlags {
    #[arg(long, overrides_with = "no_balance")]
    pub balance: bool,
    #[arg(long)]
    pub no_balance: bool,
    #[arg(long)]
    pub balance_seed: Option<u64>,
    /// Maximum copies of any one record, as a replication factor.
    #[arg(long)]
    pub balance_cap: Option<f64>,
    #[arg(long, overrides_with = "no_augment")]
    pub augment: bool,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub aug_copies: Option<usize>,
    #[arg(long)]
    pub aug_seed: Option<u64>,
}

impl DataFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if self.no_balance {
            cfg.balance.enabled = false;
        }
        if let Some(s) = self.balance_seed {
            cfg.balance.seed = s;
        }
        if let Some(c) = self.balance_cap {
            cfg.balance.max_replication_factor = c;
        }
        if self.no_augment {
            cfg.augment.enabled = false;
        }
        if let Some(n) = self.aug_copies {
            cfg.augment.copies_per_record = n;
        }
        if let Some(s) = self.aug_seed {
            cfg.augment.seed = s;
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub data: DataFlags,
    /// Fraction of records held out as a stratified dev split.
    #[arg(long, default_value_t = 0.0)]
    pub dev_fraction: f64,
    /// Print the summary without writing anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Run1,
    Run2,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Run1 => Preset::Run1,
            PresetArg::Run2 => Preset::Run2,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<PresetArg>,
    /// JSON training config with a `version` field.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "dry_run")]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub dev_manifest: Option<PathBuf>,
    #[arg(long)]
    pub dev_fraction: Option<f64>,
    #[arg(long)]
    pub backbone: Option<BackboneId>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub freeze_backbone: bool,
    /// Start the backbone from random weights.
    #[arg(long)]
    pub no_pretrained: bool,
    /// Log zero wall-clock time so reruns produce identical logs.
    #[arg(long)]
    pub deterministic: bool,
    #[command(flatten)]
    pub data: DataFlags,
    /// Run directory name under `<workspace>/run/`.
    #[arg(long)]
    pub name: Option<String>,
    /// Write config.json only.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Multi-label decoding threshold; defaults to the checkpoint's.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Re-decode multi-label scores at this threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Row label for the printed table.
    #[arg(long, default_value = "run")]
    pub run: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    Dev,
    Test,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Render the published reference scores.
    #[arg(long)]
    pub reference: Option<ReferenceArg>,
    /// Metrics report JSON files; each becomes one cell, row named after the file stem.
    #[arg(long)]
    pub metrics: Vec<PathBuf>,
    /// A JSON table with a `runs` array of {run, task, weighted_f1}.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One trained run in `<workspace>/runs.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifestEntry {
    pub run_name: String,
    pub task_id: TaskId,
    pub backbone: BackboneId,
    pub config_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub enabled: bool,
    pub copies_per_record: usize,
    pub crop_fraction: f64,
    pub rotation_degrees: Vec<f64>,
    pub horizontal_flip: bool,
    pub records_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub task_id: TaskId,
    pub train_records: usize,
    pub dev_records: usize,
    pub counts_before: IndexMap<String, usize>,
    pub counts_after_balance: IndexMap<String, usize>,
    pub augmentation: AugmentPlan,
    pub skipped: SkipReport,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            error: error.into(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_input_error() {
            Self::input(e)
        } else {
            Self::runtime(e)
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Predict(a) => cmd_predict(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Report(a) => cmd_report(cli, a),
    }
}

fn task_spec(cli: &Cli) -> CliResult<TaskSpec> {
    let task = cli
        .task
        .ok_or_else(|| CliError::input(anyhow!("--task is required for this command")))?;
    TaskSpec::builtin_with_extra_label(task, cli.task3_extra_label.as_deref()).map_err(CliError::input)
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::runtime)?;
    }
    std::fs::write(path, body)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::runtime)
}

fn format_counts(counts: &IndexMap<String, usize>) -> String {
    counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn cmd_prepare(cli: &Cli, a: &PrepareArgs) -> CliResult<()> {
    let spec = task_spec(cli)?;
    let seed = cli.seed.unwrap_or(0);
    let mut cfg = TrainConfig::new(spec.clone(), BackboneId::Toy, seed);
    a.data.apply(&mut cfg);
    cfg.balance.validate().map_err(CliError::input)?;
    cfg.augment.validate().map_err(CliError::input)?;
    if !(0.0..1.0).contains(&a.dev_fraction) {
        return Err(CliError::input(anyhow!("--dev-fraction must be in [0, 1)")));
    }

    let full = load_manifest(&a.manifest, &spec, Split::Train).map_err(CliError::input)?;
    let (train_ds, dev_ds) = if a.dev_fraction > 0.0 {
        let (t, d) = stratified_split(&full, a.dev_fraction, derive_seed(seed, Stream::Split));
        (t, Some(d))
    } else {
        (full, None)
    };
    let balanced = upsample(&train_ds, &cfg.balance).map_err(CliError::input)?;
    let (augmented, skipped) = augment_dataset(&balanced, &cfg.augment).map_err(CliError::input)?;
    let records_after = augmented.records.iter().filter(|r| !skipped.contains(&r.image_path)).count();

    let summary = PrepareSummary {
        task_id: spec.task_id(),
        train_records: train_ds.len(),
        dev_records: dev_ds.as_ref().map_or(0, |d| d.len()),
        counts_before: train_ds.label_counts(),
        counts_after_balance: balanced.label_counts(),
        augmentation: AugmentPlan {
            enabled: cfg.augment.enabled,
            copies_per_record: if cfg.augment.enabled { cfg.augment.copies_per_record } else { 0 },
            crop_fraction: cfg.augment.crop_fraction,
            rotation_degrees: cfg.augment.rotation_degrees.clone(),
            horizontal_flip: cfg.augment.horizontal_flip,
            records_after,
        },
        skipped,
    };

    println!("task: {}", summary.task_id);
    println!("split sizes: train={} dev={}", summary.train_records, summary.dev_records);
    println!("counts before balancing: {}", format_counts(&summary.counts_before));
    println!("counts after balancing:  {}", format_counts(&summary.counts_after_balance));
    if summary.augmentation.enabled {
        println!(
            "augmentation: {} copies per record (crop {}, rotations {:?}, flip {}) -> {} records",
            summary.augmentation.copies_per_record,
            summary.augmentation.crop_fraction,
            summary.augmentation.rotation_degrees,
            summary.augmentation.horizontal_flip,
            records_after
        );
    } else {
        println!("augmentation: off -> {records_after} records");
    }
    for s in &summary.skipped.skipped {
        println!("skipped {}: {}", s.image_path, s.reason);
    }

    if !a.dry_run {
        let dir = cli.workspace.join("prepared");
        let stem = spec.task_id().as_str();
        let json = serde_json::to_string_pretty(&summary).map_err(CliError::runtime)?;
        write_file(&dir.join(format!("{stem}.summary.json")), &json)?;
        write_file(&dir.join(format!("{stem}.train.csv")), &balanced.to_manifest_string())?;
        if let Some(dev) = &dev_ds {
            write_file(&dir.join(format!("{stem}.dev.csv")), &dev.to_manifest_string())?;
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn build_train_config(cli: &Cli, a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(CliError::input)?;
            let cfg = TrainConfig::from_json(&text).map_err(CliError::input)?;
            if let Some(t) = cli.task {
                if t != cfg.task.task_id() {
                    return Err(CliError::input(anyhow!(
                        "--task {t} differs from config task {}",
                        cfg.task.task_id()
                    )));
                }
            }
            match cli.seed {
                Some(s) => cfg.with_seed(s),
                None => cfg,
            }
        }
        None => {
            let spec = task_spec(cli)?;
            let seed = cli.seed.unwrap_or(0);
            match a.preset {
                Some(p) => Preset::from(p).config(&spec, seed),
                None => TrainConfig::new(spec, a.backbone.unwrap_or(BackboneId::InceptionV3), seed),
            }
        }
    };
    if let Some(b) = a.backbone {
        if b != cfg.model.backbone {
            let freeze = cfg.model.freeze_backbone;
            cfg.model = ModelConfig::for_task(&cfg.task, b);
            cfg.model.freeze_backbone = freeze;
        }
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    if let Some(bs) = a.batch_size {
        cfg.batch_size = bs;
    }
    if let Some(f) = a.dev_fraction {
        cfg.dev_fraction = f;
    }
    if let Some(t) = a.threshold {
        cfg.decode.threshold = t;
    }
    if a.freeze_backbone {
        cfg.model.freeze_backbone = true;
    }
    if a.no_pretrained {
        cfg.model.pretrained = false;
    }
    if a.deterministic {
        cfg.deterministic = true;
    }
    a.data.apply(&mut cfg);
    cfg.validate().map_err(CliError::input)?;
    Ok(cfg)
}

fn default_run_name(cfg: &TrainConfig, preset: Option<PresetArg>) -> String {
    let what = match preset {
        Some(PresetArg::Run1) => "run1",
        Some(PresetArg::Run2) => "run2",
        None => cfg.model.backbone.as_str(),
    };
    format!("{}-{what}-s{}", cfg.task.task_id(), cfg.seed)
}

fn read_registry(path: &Path) -> CliResult<Vec<RunManifestEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::runtime)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(CliError::input)
}

pub fn cmd_train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let cfg = build_train_config(cli, a)?;
    let name = a.name.clone().unwrap_or_else(|| default_run_name(&cfg, a.preset));
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(CliError::input(anyhow!("invalid run name `{name}`")));
    }
    let registry_path = cli.workspace.join(RUNS_REGISTRY);
    let mut registry = read_registry(&registry_path)?;
    if registry.iter().any(|e| e.run_name == name) {
        return Err(CliError::input(anyhow!(
            "run `{name}` already exists in {}; pick another --name",
            registry_path.display()
        )));
    }
    let run_dir = cli.workspace.join("run").join(&name);

    if a.dry_run {
        let path = run_dir.join(CONFIG_FILE);
        write_file(&path, &cfg.to_json().map_err(CliError::runtime)?)?;
        println!("wrote {}", path.display());
        return Ok(());
    }

    let train_manifest = a.train_manifest.as_deref().expect("required unless dry run");
    let artifacts = train::train(&cfg, train_manifest, a.dev_manifest.as_deref(), &run_dir)?;

    registry.push(RunManifestEntry {
        run_name: name.clone(),
        task_id: cfg.task.task_id(),
        backbone: cfg.model.backbone,
        config_path: run_dir.join(CONFIG_FILE),
        checkpoint_path: artifacts.best_checkpoint.clone(),
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });
    let json = serde_json::to_string_pretty(&registry).map_err(CliError::runtime)?;
    write_file(&registry_path, &json)?;

    if let Some(last) = artifacts.log.last() {
        println!("run {name}: {} epochs, final train_loss {:.5}", last.epoch, last.train_loss);
    }
    if let Some(f1) = artifacts.meta.best_dev_weighted_f1 {
        println!("best epoch {} with dev weighted F1 {f1:.4}", artifacts.meta.best_epoch);
    }
    println!("final checkpoint: {}", artifacts.final_checkpoint.display());
    println!("best checkpoint:  {}", artifacts.best_checkpoint.display());
    Ok(())
}

pub fn cmd_predict(cli: &Cli, a: &PredictArgs) -> CliResult<()> {
    let (model, meta) = load_checkpoint(&a.checkpoint)
        .with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))
        .map_err(CliError::input)?;
    if let Some(t) = cli.task {
        if t != meta.task.task_id() {
            return Err(CliError::input(anyhow!(
                "checkpoint was trained for {}, not {t}",
                meta.task.task_id()
            )));
        }
    }
    let ds = load_unlabeled_manifest(&a.manifest, &meta.task, Split::Test)
        .with_context(|| format!("manifest does not match the {} vocabulary", meta.task.task_id()))
        .map_err(CliError::input)?;
    let mut decode: DecodeOptions = meta.decode;
    if let Some(t) = a.threshold {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::input(anyhow!("--threshold must be in (0, 1)")));
        }
        decode.threshold = t;
    }
    let (preds, _) = predict_dataset(&model, &ds, a.batch_size, &decode)?;
    write_predictions(&a.out, &meta.task, &preds).map_err(CliError::runtime)?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

pub fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult<()> {
    let spec = task_spec(cli)?;
    let truth = load_manifest(&a.manifest, &spec, Split::Test).map_err(CliError::input)?;
    let mut preds = read_predictions(&a.predictions, &spec).map_err(CliError::input)?;
    let threshold = match (spec.mode(), a.threshold) {
        (LabelMode::MultiLabel, Some(t)) => {
            let opts = DecodeOptions {
                threshold: t,
                ..DecodeOptions::default()
            };
            preds = preds
                .into_iter()
                .map(|p| PredictionRecord::from_scores(p.image_path, p.scores, &spec, &opts))
                .collect::<Result<_, _>>()
                .map_err(CliError::input)?;
            Some(t)
        }
        _ => None,
    };
    let report = weighted_f1(&truth, &preds).map_err(CliError::input)?.with_threshold(threshold);
    let out = a.out.clone().unwrap_or_else(|| cli.workspace.join("metrics.json"));
    write_file(&out, &report.to_json().map_err(CliError::runtime)?)?;
    print!("{}", render_metrics_table(&a.run, &report));
    Ok(())
}

pub fn cmd_report(_cli: &Cli, a: &ReportArgs) -> CliResult<()> {
    let mut table = match a.reference {
        Some(ReferenceArg::Dev) => reference_dev_runs(),
        Some(ReferenceArg::Test) => reference_test_runs(),
        None => RunTable::default(),
    };
    if let Some(path) = &a.runs {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(CliError::input)?;
        let extra: RunTable = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(CliError::input)?;
        if table.title.is_none() {
            table.title = extra.title;
        }
        table.runs.extend(extra.runs);
    }
    for path in &a.metrics {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(CliError::input)?;
        let report = MetricsReport::from_json(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(CliError::input)?;
        let run = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        table.runs.push(RunScore {
            run,
            task: report.task_id,
            weighted_f1: report.weighted_f1,
        });
    }
    if table.runs.is_empty() {
        return Err(CliError::input(anyhow!("nothing to report: pass --reference, --runs or --metrics")));
    }
    let rendered = render_run_table(&table);
    print!("{rendered}");
    if let Some(out) = &a.out {
        write_file(out, &serde_json::to_string_pretty(&table).map_err(CliError::runtime)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("sentiment").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = parse(&["train", "--preset", "run2", "--dry-run", "--task", "task3", "--seed", "9"]);
        assert_eq!(cli.task, Some(TaskId::Task3));
        assert_eq!(cli.seed, Some(9));
        let Command::Train(a) = &cli.command else { panic!() };
        let cfg = build_train_config(&cli, a).unwrap();
        assert_eq!(cfg.model.backbone, BackboneId::Vgg19);
        assert_eq!(cfg.seed, 9);
        assert_eq!(default_run_name(&cfg, a.preset), "task3-run2-s9");
    }

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let cli = parse(&[
            "--task", "task1", "train", "--preset", "run1", "--backbone", "toy", "--epochs", "2", "--no-augment",
            "--dry-run",
        ]);
        let Command::Train(a) = &cli.command else { panic!() };
        let cfg = build_train_config(&cli, a).unwrap();
        assert_eq!(cfg.model.backbone, BackboneId::Toy);
        assert_eq!(cfg.model.head_hidden_units, BackboneId::Toy.default_hidden_units());
        assert_eq!(cfg.epochs, 2);
        assert!(!cfg.augment.enabled);
        assert!(cfg.balance.enabled);
    }

    #[test]
    fn zero_epochs_is_an_input_error() {
        let cli = parse(&["--task", "task1", "train", "--epochs", "0", "--dry-run"]);
        let Command::Train(a) = &cli.command else { panic!() };
        assert_eq!(build_train_config(&cli, a).unwrap_err().code, EXIT_INPUT);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["sentiment", "frobnicate"]), EXIT_INPUT);
        assert_eq!(run(["sentiment", "--task", "task9", "report", "--reference", "dev"]), EXIT_INPUT);
        assert_eq!(run(["sentiment", "--help"]), EXIT_OK);
    }
}
