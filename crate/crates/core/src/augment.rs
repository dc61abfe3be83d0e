//! Geometric augmentation: cropping, rotation and horizontal flips.
//!
//! Augmented records do not carry pixels. Each one stores the transform
//! chain sampled for it, and the chain is applied when the image is decoded
//! for a batch.

use std::path::Path;

use image::{imageops, ImageBuffer, Rgb, Rgb32FImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Dataset, Origin};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error("rotation angle {0} outside [-180, 180]")]
    AngleOutOfRange(f64),
    #[error("crop fraction {0} outside (0, 1]")]
    BadCropFraction(f64),
    #[error("crop offset ({0}, {1}) outside [0, 1]")]
    BadCropOffset(f64, f64),
    #[error("crop of {width}x{height} pixels is smaller than 1x1")]
    CropTooSmall { width: u32, height: u32 },
    #[error("image must be at least 1x1 with 3 channels, got {width}x{height} and {len} values")]
    BadShape { width: u32, height: u32, len: usize },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: String, reason: String },
}

/// RGB image with values in `[0, 1]`, stored row-major and interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pixels: Rgb32FImage,
}

impl ImageTensor {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, AugmentError> {
        let len = values.len();
        if width == 0 || height == 0 || len != (width * height * 3) as usize {
            return Err(AugmentError::BadShape { width, height, len });
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let pixels = ImageBuffer::from_raw(width, height, values).expect("length checked");
        Ok(Self { pixels })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image must be at least 1x1");
        let pixels = ImageBuffer::from_fn(width, height, |x, y| {
            Rgb(f(x, y).map(|v| v.clamp(0.0, 1.0)))
        });
        Self { pixels }
    }

    /// Decodes a JPEG or PNG file. Grayscale and alpha inputs become RGB.
    pub fn open(path: &Path) -> Result<Self, AugmentError> {
        let decode_err = |reason: String| AugmentError::Decode {
            path: path.display().to_string(),
            reason,
        };
        let img = image::ImageReader::open(path)
            .map_err(|e| decode_err(e.to_string()))?
            .with_guessed_format()
            .map_err(|e| decode_err(e.to_string()))?
            .decode()
            .map_err(|e| decode_err(e.to_string()))?;
        Ok(Self {
            pixels: img.to_rgb32f(),
        })
    }

    /// Converts 8-bit RGBA (as produced by a browser canvas), dropping alpha.
    pub fn from_rgba8(width: u32, height: u32, rgba: &[u8]) -> Result<Self, AugmentError> {
        if width == 0 || height == 0 || rgba.len() != (width * height * 4) as usize {
            return Err(AugmentError::BadShape {
                width,
                height,
                len: rgba.len(),
            });
        }
        let values = rgba
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]].map(|v| v as f32 / 255.0))
            .collect();
        Self::new(width, height, values)
    }

    pub fn to_rgba8(&self) -> Vec<u8> {
        self.pixels
            .pixels()
            .flat_map(|p| {
                let [r, g, b] = p.0.map(|v| (v * 255.0).round() as u8);
                [r, g, b, 255]
            })
            .collect()
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        self.pixels.get_pixel(x, y).0
    }

    /// Interleaved RGB values, row-major.
    pub fn values(&self) -> &[f32] {
        self.pixels.as_raw()
    }

    /// Bilinear resize to `width` x `height`.
    pub fn resize(&self, width: u32, height: u32) -> Self {
        if width == self.width() && height == self.height() {
            return self.clone();
        }
        let mut pixels = imageops::resize(&self.pixels, width, height, imageops::FilterType::Triangle);
        pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self { pixels }
    }

    /// Planar `[3, h, w]` layout with per-channel `(v - mean) / std`.
    pub fn to_chw(&self, mean: [f32; 3], std: [f32; 3]) -> Vec<f32> {
        let (w, h) = (self.width() as usize, self.height() as usize);
        let mut out = vec![0f32; 3 * w * h];
        for (i, p) in self.pixels.pixels().enumerate() {
            for c in 0..3 {
                out[c * w * h + i] = (p.0[c] - mean[c]) / std[c];
            }
        }
        out
    }

    fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 3] {
        let max_x = (self.width() - 1) as f64;
        let max_y = (self.height() - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let (x0, y0) = (x.floor(), y.floor());
        let (tx, ty) = ((x - x0) as f32, (y - y0) as f32);
        let (x0, y0) = (x0 as u32, y0 as u32);
        let x1 = (x0 + 1).min(self.width() - 1);
        let y1 = (y0 + 1).min(self.height() - 1);
        let (a, b) = (self.pixel(x0, y0), self.pixel(x1, y0));
        let (c, d) = (self.pixel(x0, y1), self.pixel(x1, y1));
        let mut out = [0f32; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bottom = c[k] + (d[k] - c[k]) * tx;
            out[k] = (top + (bottom - top) * ty).clamp(0.0, 1.0);
        }
        out
    }
}

/// Horizontal mirror: column `c` moves to column `width - 1 - c`.
pub fn apply_flip(img: &ImageTensor) -> ImageTensor {
    ImageTensor {
        pixels: imageops::flip_horizontal(&img.pixels),
    }
}

/// Vertical mirror: row `r` moves to row `height - 1 - r`.
pub fn apply_vertical_flip(img: &ImageTensor) -> ImageTensor {
    ImageTensor {
        pixels: imageops::flip_vertical(&img.pixels),
    }
}

/// Rotates counter-clockwise about the image centre, keeping the shape.
/// Pixels sampled from outside the source replicate the nearest edge.
pub fn apply_rotation(img: &ImageTensor, degrees: f64) -> Result<ImageTensor, AugmentError> {
    if !(-180.0..=180.0).contains(&degrees) {
        return Err(AugmentError::AngleOutOfRange(degrees));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    // Right angles use exact trig so that pixel centres map onto pixel centres.
    let (sin, cos) = match degrees {
        90.0 => (1.0, 0.0),
        -90.0 => (-1.0, 0.0),
        d if d.abs() == 180.0 => (0.0, -1.0),
        d => d.to_radians().sin_cos(),
    };
    let cx = (img.width() - 1) as f64 / 2.0;
    let cy = (img.height() - 1) as f64 / 2.0;
    let out = ImageTensor::from_fn(img.width(), img.height(), |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        // Inverse map in y-down coordinates.
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        img.sample_bilinear(sx, sy)
    });
    Ok(out)
}

/// Cuts an axis-aligned window whose sides are `fraction` of the input's,
/// placed by `offset` (0 = left/top edge, 1 = right/bottom edge).
pub fn apply_crop(img: &ImageTensor, fraction: f64, offset: (f64, f64)) -> Result<ImageTensor, AugmentError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AugmentError::BadCropFraction(fraction));
    }
    let (ox, oy) = offset;
    if !((0.0..=1.0).contains(&ox) && (0.0..=1.0).contains(&oy)) {
        return Err(AugmentError::BadCropOffset(ox, oy));
    }
    let width = (fraction * img.width() as f64).round() as u32;
    let height = (fraction * img.height() as f64).round() as u32;
    if width == 0 || height == 0 {
        return Err(AugmentError::CropTooSmall { width, height });
    }
    let left = (ox * (img.width() - width) as f64).round() as u32;
    let top = (oy * (img.height() - height) as f64).round() as u32;
    Ok(ImageTensor {
        pixels: imageops::crop_imm(&img.pixels, left, top, width, height).to_image(),
    })
}

/// One step of an augmentation chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    Crop { fraction: f64, offset_x: f64, offset_y: f64 },
    Rotate { degrees: f64 },
    FlipHorizontal,
}

impl Transform {
    pub fn apply(&self, img: &ImageTensor) -> Result<ImageTensor, AugmentError> {
        match *self {
            Transform::Crop {
                fraction,
                offset_x,
                offset_y,
            } => apply_crop(img, fraction, (offset_x, offset_y)),
            Transform::Rotate { degrees } => apply_rotation(img, degrees),
            Transform::FlipHorizontal => Ok(apply_flip(img)),
        }
    }
}

pub fn apply_chain(img: &ImageTensor, chain: &[Transform]) -> Result<ImageTensor, AugmentError> {
    chain.iter().try_fold(img.clone(), |acc, t| t.apply(&acc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub crop_fraction: f64,
    pub rotation_degrees: Vec<f64>,
    pub horizontal_flip: bool,
    pub copies_per_record: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            crop_fraction: 0.8,
            rotation_degrees: vec![-15.0, 15.0],
            horizontal_flip: true,
            copies_per_record: 1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(AugmentError::InvalidConfig(format!(
                "crop_fraction must be in (0, 1], got {}",
                self.crop_fraction
            )));
        }
        if let Some(a) = self
            .rotation_degrees
            .iter()
            .find(|a| !(-180.0..=180.0).contains(*a))
        {
            return Err(AugmentError::InvalidConfig(format!(
                "rotation angle {a} outside [-180, 180]"
            )));
        }
        Ok(())
    }

    /// Samples one chain: crop (when `crop_fraction < 1`) at a uniform
    /// offset, then one of the configured rotations, then a flip with
    /// probability one half.
    pub fn sample_chain(&self, rng: &mut impl Rng) -> Vec<Transform> {
        let mut chain = Vec::with_capacity(3);
        if self.crop_fraction < 1.0 {
            chain.push(Transform::Crop {
                fraction: self.crop_fraction,
                offset_x: rng.random::<f64>(),
                offset_y: rng.random::<f64>(),
            });
        }
        if !self.rotation_degrees.is_empty() {
            let degrees = self.rotation_degrees[rng.random_range(0..self.rotation_degrees.len())];
            if degrees != 0.0 {
                chain.push(Transform::Rotate { degrees });
            }
        }
        if self.horizontal_flip && rng.random_bool(0.5) {
            chain.push(Transform::FlipHorizontal);
        }
        chain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub image_path: String,
    pub reason: String,
}

/// Records whose images could not be read while planning augmentation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: Vec<SkippedRecord>,
}

impl SkipReport {
    pub fn is_empty(&self) -> bool {
        self.skipped.is_empty()
    }

    pub fn contains(&self, image_path: &str) -> bool {
        self.skipped.iter().any(|s| s.image_path == image_path)
    }
}

fn probe_image(path: &Path) -> Result<(), String> {
    let (w, h) = image::ImageReader::open(path)
        .map_err(|e| e.to_string())?
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .into_dimensions()
        .map_err(|e| e.to_string())?;
    if w == 0 || h == 0 {
        return Err(format!("empty image {w}x{h}"));
    }
    Ok(())
}

/// Appends `copies_per_record` augmented variants after the input records.
///
/// Every input record's image header is probed first; unreadable images
/// get no variants and are listed in the returned [`SkipReport`].
pub fn augment_dataset(ds: &Dataset, cfg: &AugmentConfig) -> Result<(Dataset, SkipReport), AugmentError> {
    if !cfg.enabled || cfg.copies_per_record == 0 {
        return Ok((ds.clone(), SkipReport::default()));
    }
    cfg.validate()?;
    augment_with_probe(ds, cfg, probe_image)
}

/// [`augment_dataset`] with a caller-supplied readability check.
pub fn augment_with_probe(
    ds: &Dataset,
    cfg: &AugmentConfig,
    mut probe: impl FnMut(&Path) -> Result<(), String>,
) -> Result<(Dataset, SkipReport), AugmentError> {
    if !cfg.enabled || cfg.copies_per_record == 0 {
        return Ok((ds.clone(), SkipReport::default()));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = SkipReport::default();
    let mut records = ds.records.clone();
    let mut probed: std::collections::HashMap<String, Result<(), String>> = Default::default();
    for source in &ds.records {
        let status = probed
            .entry(source.image_path.clone())
            .or_insert_with(|| probe(&ds.resolve_path(source)));
        if let Err(reason) = status {
            if !report.contains(&source.image_path) {
                report.skipped.push(SkippedRecord {
                    image_path: source.image_path.clone(),
                    reason: reason.clone(),
                });
            }
            continue;
        }
        for _ in 0..cfg.copies_per_record {
            let mut variant = source.clone();
            variant.origin = Origin::Augmented;
            variant.transforms.extend(cfg.sample_chain(&mut rng));
            records.push(variant);
        }
    }
    Ok((ds.with_records(records), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{ImageRecord, Split, TaskId, TaskSpec};

    fn gradient(w: u32, h: u32) -> ImageTensor {
        ImageTensor::from_fn(w, h, |x, y| {
            [
                x as f32 / w as f32,
                y as f32 / h as f32,
                ((x * 7 + y * 13) % 17) as f32 / 16.0,
            ]
        })
    }

    #[test]
    fn flip_is_an_involution_and_mirrors_columns() {
        let img = gradient(7, 5);
        let flipped = apply_flip(&img);
        assert_eq!(apply_flip(&flipped), img);
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(flipped.pixel(6 - x, y), img.pixel(x, y));
            }
        }
        let flat = ImageTensor::from_fn(4, 3, |_, _| [0.3, 0.3, 0.3]);
        assert_eq!(apply_flip(&flat), flat);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = gradient(9, 6);
        assert_eq!(apply_rotation(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn four_right_angles_return_the_original() {
        let img = gradient(8, 8);
        let mut r = img.clone();
        for _ in 0..4 {
            r = apply_rotation(&r, 90.0).unwrap();
        }
        assert_eq!(r, img);
        let once = apply_rotation(&img, 90.0).unwrap();
        assert_ne!(once, img);
    }

    #[test]
    fn half_turn_equals_both_flips() {
        for (w, h) in [(6, 6), (7, 4), (5, 9)] {
            let img = gradient(w, h);
            let rotated = apply_rotation(&img, 180.0).unwrap();
            let flipped = apply_vertical_flip(&apply_flip(&img));
            assert_eq!(rotated, flipped);
            assert_eq!(apply_rotation(&img, -180.0).unwrap(), flipped);
        }
    }

    #[test]
    fn rotation_keeps_shape_and_range() {
        let img = gradient(11, 7);
        let r = apply_rotation(&img, 15.0).unwrap();
        assert_eq!((r.width(), r.height()), (11, 7));
        assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(apply_rotation(&img, 181.0).is_err());
    }

    #[test]
    fn crop_geometry() {
        let img = gradient(100, 100);
        assert_eq!(apply_crop(&img, 1.0, (0.3, 0.9)).unwrap(), img);

        let c = apply_crop(&img, 0.5, (0.0, 0.0)).unwrap();
        assert_eq!((c.width(), c.height()), (50, 50));
        assert_eq!(c.pixel(0, 0), img.pixel(0, 0));
        assert_eq!(c.pixel(49, 49), img.pixel(49, 49));

        let c = apply_crop(&img, 0.5, (1.0, 1.0)).unwrap();
        assert_eq!(c.pixel(0, 0), img.pixel(50, 50));

        let odd = gradient(33, 21);
        let c = apply_crop(&odd, 0.8, (0.5, 0.5)).unwrap();
        assert_eq!(c.height(), (0.8f64 * 21.0).round() as u32);
        assert_eq!(c.width(), (0.8f64 * 33.0).round() as u32);
    }

    #[test]
    fn crop_rejects_degenerate_input() {
        let img = gradient(3, 3);
        assert!(matches!(
            apply_crop(&img, 0.1, (0.0, 0.0)),
            Err(AugmentError::CropTooSmall { .. })
        ));
        assert!(apply_crop(&img, 0.0, (0.0, 0.0)).is_err());
        assert!(apply_crop(&img, 1.5, (0.0, 0.0)).is_err());
        assert!(apply_crop(&img, 0.5, (1.2, 0.0)).is_err());
    }

    #[test]
    fn rgba_round_trip() {
        let rgba: Vec<u8> = (0..2 * 3 * 4).map(|i| (i * 10) as u8).collect();
        let img = ImageTensor::from_rgba8(2, 3, &rgba).unwrap();
        let back = img.to_rgba8();
        for (i, (a, b)) in rgba.iter().zip(&back).enumerate() {
            if i % 4 == 3 {
                assert_eq!(*b, 255);
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(ImageTensor::from_rgba8(2, 3, &rgba[..5]).is_err());
    }

    #[test]
    fn chw_layout_normalizes() {
        let img = ImageTensor::from_fn(2, 1, |x, _| [x as f32, 0.5, 1.0]);
        let chw = img.to_chw([0.5; 3], [0.5; 3]);
        assert_eq!(chw, vec![-1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    fn toy_dataset(n: usize) -> Dataset {
        let spec = TaskSpec::builtin(TaskId::Task2);
        let records = (0..n)
            .map(|i| ImageRecord::new(format!("img{i}.png"), [i % 7, (i + 3) % 7]))
            .collect();
        Dataset::from_records(spec, Split::Train, "", records).unwrap()
    }

    #[test]
    fn augment_appends_variants_with_same_labels() {
        let ds = toy_dataset(10);
        let cfg = AugmentConfig {
            copies_per_record: 2,
            ..Default::default()
        };
        let (out, report) = augment_with_probe(&ds, &cfg, |_| Ok(())).unwrap();
        assert!(report.is_empty());
        assert_eq!(out.len(), 30);
        assert_eq!(&out.records[..10], &ds.records[..]);
        for (i, r) in out.records[10..].iter().enumerate() {
            let src = &ds.records[i / 2];
            assert_eq!(r.labels, src.labels);
            assert_eq!(r.image_path, src.image_path);
            assert_eq!(r.origin, Origin::Augmented);
        }
    }

    #[test]
    fn augment_disabled_is_identity() {
        let ds = toy_dataset(4);
        let cfg = AugmentConfig {
            enabled: false,
            ..Default::default()
        };
        let (out, _) = augment_dataset(&ds, &cfg).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn augment_is_deterministic_per_seed() {
        let ds = toy_dataset(6);
        let cfg = AugmentConfig {
            copies_per_record: 3,
            seed: 17,
            ..Default::default()
        };
        let a = augment_with_probe(&ds, &cfg, |_| Ok(())).unwrap().0;
        let b = augment_with_probe(&ds, &cfg, |_| Ok(())).unwrap().0;
        assert_eq!(a, b);
        let other = AugmentConfig { seed: 18, ..cfg };
        let c = augment_with_probe(&ds, &other, |_| Ok(())).unwrap().0;
        assert_ne!(a, c);
    }

    #[test]
    fn unreadable_images_are_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TaskSpec::builtin(TaskId::Task1);
        let good = dir.path().join("good.png");
        image::RgbImage::from_pixel(4, 4, image::Rgb([10, 20, 30]))
            .save(&good)
            .unwrap();
        std::fs::write(dir.path().join("bad.png"), b"not an image").unwrap();
        let ds = Dataset::from_records(
            spec,
            Split::Train,
            dir.path(),
            vec![
                ImageRecord::new("good.png", [0]),
                ImageRecord::new("bad.png", [1]),
                ImageRecord::new("missing.png", [2]),
            ],
        )
        .unwrap();
        let (out, report) = augment_dataset(&ds, &AugmentConfig::default()).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(report.skipped.len(), 2);
        assert!(report.contains("bad.png"));
        assert!(report.contains("missing.png"));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = AugmentConfig {
            rotation_degrees: vec![200.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = AugmentConfig {
            crop_fraction: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn decode_grayscale_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::from_pixel(3, 2, image::Luma([128])).save(&p).unwrap();
        let img = ImageTensor::open(&p).unwrap();
        let px = img.pixel(1, 1);
        assert_eq!(px[0], px[1]);
        assert_eq!(px[1], px[2]);
        assert!((px[0] - 128.0 / 255.0).abs() < 1e-6);
    }
}
