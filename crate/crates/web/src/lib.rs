//! Browser bindings for three data-side stages: previewing an augmentation
//! chain on a canvas image, upsampling a pasted manifest, and sweeping the
//! multi-label decoding threshold over synthetic scores.
//!
//! Every export returns JSON or raw RGBA so the page stays framework-free.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentiment_core::augment::{apply_chain, ImageTensor, Transform};
use sentiment_core::balance::{upsample, BalanceConfig};
use sentiment_core::evaluate::{default_grid, sweep_label_sets, SweepReport};
use sentiment_core::manifest::parse_manifest_str;
use sentiment_core::{Split, TaskId, TaskSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn task_spec(task: &str) -> Result<TaskSpec, JsError> {
    let id: TaskId = task.parse().map_err(js_err)?;
    Ok(TaskSpec::builtin(id))
}

/// Applies crop → rotate → optional flip to canvas RGBA pixels and returns
/// RGBA at the input size, the way batches are resized to the model input.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn augment_preview(
    width: u32,
    height: u32,
    rgba: &[u8],
    crop_fraction: f64,
    offset_x: f64,
    offset_y: f64,
    degrees: f64,
    flip: bool,
) -> Result<Vec<u8>, JsError> {
    let img = ImageTensor::from_rgba8(width, height, rgba).map_err(js_err)?;
    let mut chain = Vec::new();
    if crop_fraction < 1.0 {
        chain.push(Transform::Crop {
            fraction: crop_fraction,
            offset_x,
            offset_y,
        });
    }
    if degrees != 0.0 {
        chain.push(Transform::Rotate { degrees });
    }
    if flip {
        chain.push(Transform::FlipHorizontal);
    }
    let out = apply_chain(&img, &chain).map_err(js_err)?;
    Ok(out.resize(width, height).to_rgba8())
}

#[derive(Serialize)]
struct BalancePreview {
    labels: Vec<String>,
    before: Vec<usize>,
    after: Vec<usize>,
    records_before: usize,
    records_after: usize,
}

/// Upsamples a pasted `image_path,labels` manifest and reports per-label
/// counts before and after.
#[wasm_bindgen]
pub fn balance_preview(task: &str, manifest_csv: &str, max_replication_factor: f64, seed: u64) -> Result<String, JsError> {
    let spec = task_spec(task)?;
    let ds = parse_manifest_str(manifest_csv, &spec, Split::Train).map_err(js_err)?;
    let cfg = BalanceConfig {
        seed,
        max_replication_factor,
        ..BalanceConfig::default()
    };
    let out = upsample(&ds, &cfg).map_err(js_err)?;
    let preview = BalancePreview {
        labels: spec.labels().to_vec(),
        before: ds.counts(),
        after: out.counts(),
        records_before: ds.len(),
        records_after: out.len(),
    };
    serde_json::to_string(&preview).map_err(js_err)
}

/// Random multi-label truth with scores near 0.75 for true labels and
/// 0.25 for false ones, spread by `noise`.
fn synthetic_scores(k: usize, records: usize, noise: f64, seed: u64) -> (Vec<BTreeSet<usize>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::with_capacity(records);
    let mut scores = Vec::with_capacity(records);
    for _ in 0..records {
        let mut set: BTreeSet<usize> = (0..k).filter(|_| rng.random_bool(0.3)).collect();
        if set.is_empty() {
            set.insert(rng.random_range(0..k));
        }
        let row = (0..k)
            .map(|l| {
                let centre = if set.contains(&l) { 0.75 } else { 0.25 };
                (centre + noise * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0)
            })
            .collect();
        truth.push(set);
        scores.push(row);
    }
    (truth, scores)
}

/// Weighted F1 across a threshold grid on seeded synthetic scores for a
/// multi-label task.
#[wasm_bindgen]
pub fn threshold_sweep(task: &str, records: usize, noise: f64, step: f64, seed: u64) -> Result<String, JsError> {
    let spec = task_spec(task)?;
    if !(step > 0.0 && step < 0.5) {
        return Err(JsError::new("step must be in (0, 0.5)"));
    }
    let (truth, scores) = synthetic_scores(spec.num_labels(), records.max(1), noise, seed);
    let report: SweepReport =
        sweep_label_sets(spec.num_labels(), &truth, &scores, &default_grid(step)).map_err(js_err)?;
    serde_json::to_string(&report).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_preview_round_trips_pixels() {
        let rgba: Vec<u8> = (0..4 * 6 * 4).map(|i| if i % 4 == 3 { 255 } else { (i * 7 % 256) as u8 }).collect();
        let out = augment_preview(4, 6, &rgba, 1.0, 0.0, 0.0, 0.0, false).unwrap();
        assert_eq!(out, rgba);
        let flipped = augment_preview(4, 6, &rgba, 1.0, 0.0, 0.0, 0.0, true).unwrap();
        assert_eq!(&flipped[..4], &rgba[12..16]);
    }

    #[test]
    fn balance_preview_reports_counts() {
        let csv = "image_path,labels\na,negative\nb,negative\nc,positive\nd,neutral\n";
        let v: serde_json::Value = serde_json::from_str(&balance_preview("task1", csv, 10.0, 0).unwrap()).unwrap();
        assert_eq!(v["before"], serde_json::json!([2, 1, 1]));
        assert_eq!(v["after"], serde_json::json!([2, 2, 2]));
        assert_eq!(v["records_after"], 6);
    }

    #[test]
    fn noiseless_sweep_is_perfect_around_the_middle() {
        let report: SweepReport = serde_json::from_str(&threshold_sweep("task2", 40, 0.0, 0.1, 1).unwrap()).unwrap();
        assert_eq!(report.points.len(), 9);
        let mid = report.points.iter().find(|p| p.threshold == 0.5).unwrap();
        assert_eq!(mid.weighted_f1, 1.0);
        assert_eq!(report.best_threshold, 0.3);
    }
}
