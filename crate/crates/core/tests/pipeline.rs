//! Training loop and command-line integration.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use sentiment_core::evaluate::{read_predictions, weighted_f1, DecodeOptions, MetricsReport};
use sentiment_core::manifest::load_manifest;
use sentiment_core::model::checkpoint::{load_checkpoint, read_meta};
use sentiment_core::model::{build_model, BackboneId};
use sentiment_core::seed::{derive_seed, Stream};
use sentiment_core::train::{
    prepare_training_set, score_dataset, train, train_datasets, RunMeta, TrainError, TrainLogEntry, TrainConfig,
};
use sentiment_core::{Dataset, ImageRecord, Split, TaskId, TaskSpec};

fn toy_config(task: TaskId, seed: u64, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::new(TaskSpec::builtin(task), BackboneId::Toy, seed);
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.deterministic = true;
    cfg
}

fn sentiment(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentiment"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn frozen_backbone_is_untouched_by_training() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task1);
    let manifest = common::write_single_label_set(dir.path(), &spec, 2, 1);
    let mut cfg = toy_config(TaskId::Task1, 1, 1);
    cfg.model.freeze_backbone = true;
    let run = train(&cfg, &manifest, None, &dir.path().join("run")).unwrap();

    let initial = build_model(&cfg.model, derive_seed(cfg.seed, Stream::Init)).unwrap();
    let (trained, _) = load_checkpoint(&run.final_checkpoint).unwrap();
    let before = initial.varmap().data().lock().unwrap().clone();
    let after = trained.varmap().data().lock().unwrap().clone();
    let mut head_changed = false;
    for (name, var) in &before {
        let a: Vec<f32> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let b: Vec<f32> = after[name].as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        if name.starts_with("backbone.") {
            assert_eq!(a, b, "{name} changed while frozen");
        } else if a != b {
            head_changed = true;
        }
    }
    assert!(head_changed);
}

#[test]
fn best_checkpoint_reproduces_logged_dev_f1() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task2);
    let sets: Vec<BTreeSet<usize>> = (0..24).map(|i| BTreeSet::from([i % 7, (i + 2) % 7])).collect();
    let manifest = common::write_multi_label_set(dir.path(), &spec, &sets, 2);
    let mut cfg = toy_config(TaskId::Task2, 2, 3);
    cfg.dev_fraction = 0.3;
    let run = train(&cfg, &manifest, None, &dir.path().join("run")).unwrap();

    assert_eq!(run.log.len(), 3);
    assert!(run.log.iter().all(|e| e.dev_loss.is_some() && e.dev_weighted_f1.is_some()));
    let best = run.meta.best_epoch;
    let logged = run.log[best - 1].dev_weighted_f1.unwrap();
    assert!(run.log[..best - 1].iter().all(|e| e.dev_weighted_f1.unwrap() < logged));
    assert!(run.log[best..].iter().all(|e| e.dev_weighted_f1.unwrap() <= logged));

    let (model, meta) = load_checkpoint(&run.best_checkpoint).unwrap();
    assert_eq!(meta.epoch, best);
    let full = load_manifest(&manifest, &spec, Split::Train).unwrap();
    let (_, dev) = sentiment_core::train::stratified_split(&full, 0.3, derive_seed(2, Stream::Split));
    assert_eq!(run.meta.dev_records, dev.len());
    let (f1, _) = score_dataset(&model, &dev, 4, &meta.decode).unwrap();
    assert!((f1 - logged).abs() <= 1e-6, "{f1} vs {logged}");

    // The log file holds the same entries, one per line.
    let lines: Vec<TrainLogEntry> = std::fs::read_to_string(&run.log_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines, run.log);
    for f in ["config.json", "log.jsonl", "meta.json", "ckpt-final.safetensors", "ckpt-final.json", "ckpt-best.safetensors", "ckpt-best.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let meta: RunMeta = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/meta.json")).unwrap()).unwrap();
    assert_eq!(meta.best_epoch, best);
}

#[test]
fn dev_split_skips_balance_and_augment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task1);
    let manifest = common::write_single_label_set(dir.path(), &spec, 3, 3);
    let train_ds = load_manifest(&manifest, &spec, Split::Train).unwrap();
    let dev = train_ds.with_records(train_ds.records[..3].to_vec());
    let train_ds = train_ds.with_records(train_ds.records[..7].to_vec());
    let cfg = toy_config(TaskId::Task1, 3, 1);
    let run = train_datasets(&cfg, &train_ds, Some(&dev), &dir.path().join("run")).unwrap();
    assert_eq!(run.meta.dev_records, 3);
    assert!(run.meta.train_records_after_augment > 7);
}

#[test]
fn toggling_augmentation_leaves_balancing_alone() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task1);
    let manifest = common::write_single_label_set(dir.path(), &spec, 3, 4);
    let ds = load_manifest(&manifest, &spec, Split::Train).unwrap();
    let ds = ds.with_records(ds.records[..7].to_vec());
    let cfg = toy_config(TaskId::Task1, 4, 1);
    let mut off = cfg.clone();
    off.augment.enabled = false;
    let (balanced_on, aug_on, _) = prepare_training_set(&cfg, &ds).unwrap();
    let (balanced_off, aug_off, _) = prepare_training_set(&off, &ds).unwrap();
    assert_eq!(balanced_on, balanced_off);
    assert_eq!(aug_off, balanced_off);
    assert!(aug_on.len() > aug_off.len());
}

#[test]
fn unreadable_images_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task1);
    let manifest = common::write_single_label_set(dir.path(), &spec, 2, 5);
    std::fs::write(dir.path().join("broken.png"), b"not an image").unwrap();
    let mut ds = load_manifest(&manifest, &spec, Split::Train).unwrap();
    ds.records.push(ImageRecord::new("broken.png", [2]));
    let cfg = toy_config(TaskId::Task1, 5, 1);
    let run = train_datasets(&cfg, &ds, None, &dir.path().join("run")).unwrap();
    assert!(run.meta.skipped.contains("broken.png"));
}

#[test]
fn exploding_learning_rate_reports_epoch_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task2);
    let sets: Vec<BTreeSet<usize>> = (0..8).map(|i| BTreeSet::from([i % 7])).collect();
    let manifest = common::write_multi_label_set(dir.path(), &spec, &sets, 6);
    let mut cfg = toy_config(TaskId::Task2, 6, 5);
    cfg.learning_rate = 1e38;
    cfg.augment.enabled = false;
    match train(&cfg, &manifest, None, &dir.path().join("run")) {
        Err(TrainError::NonFiniteLoss { epoch, batch, .. }) => {
            assert!(epoch >= 1 && batch >= 1);
            let msg = TrainError::NonFiniteLoss { epoch, batch, value: f32::NAN }.to_string();
            assert!(msg.contains(&format!("epoch {epoch}")) && msg.contains(&format!("batch {batch}")));
        }
        other => panic!("expected a non-finite loss abort, got {other:?}"),
    }
}

#[test]
fn zero_epochs_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(TaskId::Task1, 0, 0);
    let err = train(&cfg, &dir.path().join("none.csv"), None, &dir.path().join("run")).unwrap_err();
    assert!(err.to_string().contains("at least one epoch required"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn cli_prepare_reports_balancing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task1);
    let records: Vec<_> = [5usize, 3, 2]
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| (0..n).map(move |i| ImageRecord::new(format!("c{c}_{i}.png"), [c])))
        .collect();
    let manifest = common::write_manifest(dir.path(), &spec, records, "counts.csv");
    let ws = dir.path().join("ws");

    let out = sentiment(&["--task", "task1", "--workspace", s(&ws), "prepare", "--manifest", s(&manifest), "--no-augment", "--dry-run"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("counts before balancing: negative=5 positive=3 neutral=2"), "{text}");
    assert!(text.contains("counts after balancing:  negative=5 positive=5 neutral=5"), "{text}");
    assert!(!ws.exists(), "dry run wrote to the workspace");

    let out = sentiment(&["--task", "task1", "--workspace", s(&ws), "prepare", "--manifest", s(&manifest), "--no-balance", "--no-augment"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("counts after balancing:  negative=5 positive=3 neutral=2"));
    assert!(ws.join("prepared/task1.summary.json").exists());

    let missing = dir.path().join("nope.csv");
    let out = sentiment(&["--task", "task1", "prepare", "--manifest", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn cli_train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let spec = TaskSpec::builtin(TaskId::Task2);
    let sets: Vec<BTreeSet<usize>> = (0..12).map(|i| BTreeSet::from([i % 7, (i * 3 + 1) % 7])).collect();
    let train_manifest = common::write_multi_label_set(dir.path(), &spec, &sets, 7);
    let dev_records: Vec<_> = (0..4)
        .map(|i| ImageRecord::new(format!("m{i:03}.png"), sets[i].iter().copied()))
        .collect();
    let dev_manifest = common::write_manifest(dir.path(), &spec, dev_records, "dev.csv");

    let train_args = [
        "--task", "task2", "--seed", "3", "--workspace", s(&ws), "train", "--backbone", "toy", "--epochs", "2",
        "--batch-size", "4", "--deterministic", "--name", "smoke", "--train-manifest", s(&train_manifest),
        "--dev-manifest", s(&dev_manifest),
    ];
    let out = sentiment(&train_args);
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = ws.join("run/smoke");
    for f in ["ckpt-final.safetensors", "ckpt-best.safetensors", "config.json", "log.jsonl", "meta.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let registry: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.join("runs.json")).unwrap()).unwrap();
    assert_eq!(registry[0]["run_name"], "smoke");
    assert_eq!(registry[0]["backbone"], "toy");

    // Run names are unique within a workspace.
    assert_eq!(sentiment(&train_args).status.code(), Some(2));

    let best = run_dir.join("ckpt-best.safetensors");
    let preds = dir.path().join("preds.csv");
    let out = sentiment(&["predict", "--checkpoint", s(&best), "--manifest", s(&dev_manifest), "--out", s(&preds)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_predictions(&preds, &spec).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.scores.len() == 7));

    let strict = dir.path().join("strict.csv");
    let out = sentiment(&["predict", "--checkpoint", s(&best), "--manifest", s(&dev_manifest), "--out", s(&strict), "--threshold", "0.99"]);
    assert!(out.status.success());
    let strict_rows = read_predictions(&strict, &spec).unwrap();
    for (a, b) in strict_rows.iter().zip(&rows) {
        assert!(a.decoded.is_subset(&b.decoded));
    }

    let metrics = dir.path().join("metrics.json");
    let out = sentiment(&["--task", "task2", "evaluate", "--manifest", s(&dev_manifest), "--predictions", s(&preds), "--out", s(&metrics)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = MetricsReport::from_json(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let meta = read_meta(&best).unwrap();
    assert!((report.weighted_f1 - meta.dev_weighted_f1.unwrap()).abs() <= 1e-6);
    let last_line = stdout(&out).lines().last().unwrap().to_string();
    assert!(last_line.ends_with(&format!("{:>6.3} |", report.weighted_f1)), "{last_line}");

    // A task1 checkpoint cannot score a task2 manifest.
    let t1 = TaskSpec::builtin(TaskId::Task1);
    let t1_manifest = common::write_single_label_set(&dir.path().join("t1").tap_mkdir(), &t1, 2, 8);
    let out = sentiment(&[
        "--task", "task1", "--workspace", s(&ws), "train", "--backbone", "toy", "--epochs", "1", "--no-augment",
        "--name", "t1", "--train-manifest", s(&t1_manifest),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let t1_ckpt = ws.join("run/t1/ckpt-final.safetensors");
    let out = sentiment(&["predict", "--checkpoint", s(&t1_ckpt), "--manifest", s(&dev_manifest), "--out", s(&preds)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("vocabulary"), "{}", stderr(&out));
}

trait TapMkdir {
    fn tap_mkdir(self) -> Self;
}

impl TapMkdir for std::path::PathBuf {
    fn tap_mkdir(self) -> Self {
        std::fs::create_dir_all(&self).unwrap();
        self
    }
}

#[test]
fn cli_evaluate_prints_weighted_f1() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task1);
    let records = vec![
        ImageRecord::new("a.png", [0]),
        ImageRecord::new("b.png", [0]),
        ImageRecord::new("c.png", [1]),
    ];
    let truth = common::write_manifest(dir.path(), &spec, records, "truth.csv");
    let write = |name: &str, rows: &[(&str, &str)]| {
        let p = dir.path().join(name);
        let mut body = String::from("image_path,scores,decoded\n");
        for (path, label) in rows {
            let scores = match *label {
                "negative" => "1;0;0",
                "positive" => "0;1;0",
                _ => "0;0;1",
            };
            body.push_str(&format!("{path},{scores},{label}\n"));
        }
        std::fs::write(&p, body).unwrap();
        p
    };

    let perfect = write("perfect.csv", &[("a.png", "negative"), ("b.png", "negative"), ("c.png", "positive")]);
    let out = sentiment(&["--task", "task1", "--workspace", s(dir.path()), "evaluate", "--manifest", s(&truth), "--predictions", s(&perfect)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().last().unwrap().ends_with(" 1.000 |"), "{}", stdout(&out));

    let worked = write("worked.csv", &[("a.png", "negative"), ("b.png", "positive"), ("c.png", "positive")]);
    let out = sentiment(&["--task", "task1", "--workspace", s(dir.path()), "evaluate", "--manifest", s(&truth), "--predictions", s(&worked)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().last().unwrap().ends_with(" 0.667 |"), "{}", stdout(&out));

    let partial = write("partial.csv", &[("a.png", "negative"), ("b.png", "negative")]);
    let out = sentiment(&["--task", "task1", "evaluate", "--manifest", s(&truth), "--predictions", s(&partial)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("c.png"), "{}", stderr(&out));
}

#[test]
fn cli_report_renders_reference_tables() {
    let out = sentiment(&["report", "--reference", "test"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("| Run 1 |  0.540 |  0.572 |  0.516 |"), "{text}");
    assert!(text.contains("| Run 2 |  0.526 |  0.584 |  0.495 |"), "{text}");
    let out = sentiment(&["report", "--reference", "dev"]);
    assert!(stdout(&out).contains("| Run 1 |  0.714 |  0.588 |  0.479 |"));
    assert_eq!(sentiment(&["report"]).status.code(), Some(2));
}

#[test]
fn weighted_f1_of_training_set_is_computable_after_training() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec::builtin(TaskId::Task3);
    let sets: Vec<BTreeSet<usize>> = (0..11).map(|i| BTreeSet::from([i])).collect();
    let manifest = common::write_multi_label_set(dir.path(), &spec, &sets, 9);
    let cfg = toy_config(TaskId::Task3, 9, 1);
    let run = train(&cfg, &manifest, None, &dir.path().join("run")).unwrap();
    assert_eq!(run.meta.best_epoch, 1);
    let (model, meta) = load_checkpoint(&run.best_checkpoint).unwrap();
    let ds: Dataset = load_manifest(&manifest, &spec, Split::Train).unwrap();
    let (preds, loss) = sentiment_core::train::predict_dataset(&model, &ds, 8, &DecodeOptions::default()).unwrap();
    assert!(loss.unwrap().is_finite());
    assert_eq!(meta.num_outputs, 11);
    let report = weighted_f1(&ds, &preds).unwrap();
    assert!((0.0..=1.0).contains(&report.weighted_f1));
}
