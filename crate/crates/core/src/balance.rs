//! Upsampling of training datasets by duplicating minority records.
//!
//! Single-label datasets grow every class towards a target count by drawing
//! class members with replacement. Multi-label datasets use rarest-label-first
//! duplication: the label with the lowest current count picks one record
//! carrying it, and that record's copy raises every label it carries.
//!
//! Every original record is kept in place and in order; duplicates are
//! appended with [`Origin::Upsampled`]. No record is copied more than
//! `floor(max_replication_factor)` times in total, counting the original.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Dataset, ImageRecord, LabelMode, Origin};

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("class `{0}` has no samples and cannot be upsampled")]
    UnbalanceableClass(String),
    #[error("expected a {expected:?} dataset")]
    WrongMode { expected: LabelMode },
    #[error("invalid balance config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceTarget {
    /// Grow towards the largest pre-balance count.
    MatchMax,
    /// Grow towards the median pre-balance count (upper middle for even sizes).
    MatchMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceConfig {
    pub enabled: bool,
    pub seed: u64,
    /// Cap on the number of copies of any single record, original included.
    pub max_replication_factor: f64,
    pub target: BalanceTarget,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            seed: 0,
            max_replication_factor: 10.0,
            target: BalanceTarget::MatchMax,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if !self.max_replication_factor.is_finite() || self.max_replication_factor < 1.0 {
            return Err(BalanceError::InvalidConfig(format!(
                "max_replication_factor must be a finite value >= 1, got {}",
                self.max_replication_factor
            )));
        }
        Ok(())
    }

    fn copies_cap(&self) -> usize {
        (self.max_replication_factor.floor() as usize).max(1)
    }
}

fn target_count(counts: &[usize], target: BalanceTarget) -> usize {
    let mut sorted: Vec<usize> = counts.to_vec();
    sorted.sort_unstable();
    match (target, sorted.len()) {
        (_, 0) => 0,
        (BalanceTarget::MatchMax, _) => *sorted.last().unwrap(),
        (BalanceTarget::MatchMedian, n) if n % 2 == 1 => sorted[n / 2],
        (BalanceTarget::MatchMedian, n) => (sorted[n / 2 - 1] + sorted[n / 2]).div_ceil(2),
    }
}

fn duplicate(record: &ImageRecord) -> ImageRecord {
    ImageRecord {
        image_path: record.image_path.clone(),
        labels: record.labels.clone(),
        origin: Origin::Upsampled,
        transforms: Vec::new(),
    }
}

/// Dispatches on the dataset's mode. Disabled configs return the input.
pub fn upsample(ds: &Dataset, cfg: &BalanceConfig) -> Result<Dataset, BalanceError> {
    if !cfg.enabled {
        return Ok(ds.clone());
    }
    match ds.spec.mode() {
        LabelMode::SingleLabel => upsample_single_label(ds, cfg),
        LabelMode::MultiLabel => upsample_multi_label(ds, cfg),
    }
}

/// Grows every class of a single-label dataset to the target count by
/// sampling class members with replacement.
pub fn upsample_single_label(ds: &Dataset, cfg: &BalanceConfig) -> Result<Dataset, BalanceError> {
    if ds.spec.mode() != LabelMode::SingleLabel {
        return Err(BalanceError::WrongMode {
            expected: LabelMode::SingleLabel,
        });
    }
    cfg.validate()?;
    let counts = ds.counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(BalanceError::UnbalanceableClass(ds.spec.label(k).to_string()));
    }
    let target = target_count(&counts, cfg.target);
    let cap = cfg.copies_cap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut records = ds.records.clone();
    for (class, &count) in counts.iter().enumerate() {
        let members: Vec<usize> = ds
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.labels.contains(&class))
            .map(|(i, _)| i)
            .collect();
        let goal = target.min(members.len() * cap);
        if count >= goal {
            continue;
        }
        // (record index, copies so far); exhausted entries are swapped out.
        let mut available: Vec<(usize, usize)> = members.iter().map(|&i| (i, 1)).collect();
        for _ in count..goal {
            let pick = rng.random_range(0..available.len());
            let (idx, copies) = &mut available[pick];
            records.push(duplicate(&ds.records[*idx]));
            *copies += 1;
            if *copies >= cap {
                available.swap_remove(pick);
            }
        }
    }
    Ok(ds.with_records(records))
}

/// Rarest-label-first duplication for multi-label datasets.
///
/// Labels with no samples are skipped with a warning and excluded from the
/// target computation. A label whose carriers have all reached the copy cap
/// stops participating; the loop ends when every remaining label has
/// reached the target.
pub fn upsample_multi_label(ds: &Dataset, cfg: &BalanceConfig) -> Result<Dataset, BalanceError> {
    if ds.spec.mode() != LabelMode::MultiLabel {
        return Err(BalanceError::WrongMode {
            expected: LabelMode::MultiLabel,
        });
    }
    cfg.validate()?;
    let mut counts = ds.counts();
    let present: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] > 0).collect();
    for k in (0..counts.len()).filter(|&k| counts[k] == 0) {
        log::warn!("label `{}` has no samples; skipped by balancing", ds.spec.label(k));
    }
    let present_counts: Vec<usize> = present.iter().map(|&k| counts[k]).collect();
    let target = target_count(&present_counts, cfg.target);
    let cap = cfg.copies_cap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut copies = vec![1usize; ds.records.len()];
    let mut exhausted = vec![false; counts.len()];
    let mut records = ds.records.clone();
    loop {
        let rarest = present
            .iter()
            .copied()
            .filter(|&k| !exhausted[k] && counts[k] < target)
            .min_by_key(|&k| (counts[k], k));
        let Some(label) = rarest else { break };
        let carriers: Vec<usize> = ds
            .records
            .iter()
            .enumerate()
            .filter(|(i, r)| copies[*i] < cap && r.labels.contains(&label))
            .map(|(i, _)| i)
            .collect();
        if carriers.is_empty() {
            exhausted[label] = true;
            continue;
        }
        let idx = carriers[rng.random_range(0..carriers.len())];
        let record = &ds.records[idx];
        for &l in &record.labels {
            counts[l] += 1;
        }
        copies[idx] += 1;
        records.push(duplicate(record));
    }
    Ok(ds.with_records(records))
}
