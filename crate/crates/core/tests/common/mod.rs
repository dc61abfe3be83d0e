//! Synthetic image fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentiment_core::{Dataset, ImageRecord, Split, TaskSpec};

pub const SIDE: u32 = 64;

/// An image whose channel `bright` sits near 1 and the others near 0,
/// with a little pixel noise. Distinct channels make classes separable.
pub fn color_image(bright: usize, rng: &mut impl Rng) -> RgbImage {
    RgbImage::from_fn(SIDE, SIDE, |_, _| {
        let mut px = [0u8; 3];
        for (c, v) in px.iter_mut().enumerate() {
            *v = if c == bright % 3 {
                rng.random_range(200..=255)
            } else {
                rng.random_range(0..=40)
            };
        }
        Rgb(px)
    })
}

/// Writes `per_class` PNGs per single-label class under `dir` and returns
/// the manifest path.
pub fn write_single_label_set(dir: &Path, spec: &TaskSpec, per_class: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for i in 0..per_class {
        for class in 0..spec.num_labels() {
            let name = format!("c{class}_{i:03}.png");
            color_image(class, &mut rng).save(dir.join(&name)).unwrap();
            records.push(ImageRecord::new(name, [class]));
        }
    }
    write_manifest(dir, spec, records, "manifest.csv")
}

/// Writes one PNG per label set; the dominant channel follows the lowest
/// label.
pub fn write_multi_label_set(dir: &Path, spec: &TaskSpec, sets: &[BTreeSet<usize>], seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        let name = format!("m{i:03}.png");
        let first = set.first().copied().unwrap_or(0);
        color_image(first, &mut rng).save(dir.join(&name)).unwrap();
        records.push(ImageRecord::new(name, set.iter().copied()));
    }
    write_manifest(dir, spec, records, "manifest.csv")
}

pub fn write_manifest(dir: &Path, spec: &TaskSpec, records: Vec<ImageRecord>, file: &str) -> PathBuf {
    let ds = Dataset::from_records(spec.clone(), Split::Train, dir, records).unwrap();
    let path = dir.join(file);
    ds.write_manifest(&path).unwrap();
    path
}
