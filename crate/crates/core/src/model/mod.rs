//! Backbones with task heads, losses and checkpoints.
//!
//! A model is a backbone feature extractor followed by a head: global
//! average pooling, an optional hidden layer with ReLU, and a linear layer
//! with one unit per task label. Softmax heads serve single-label tasks and
//! elementwise sigmoid heads serve multi-label tasks.

pub mod backbone;
pub mod checkpoint;
pub mod init;
pub mod loss;

use std::fmt;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, ModuleT, Tensor, Var};
use candle_nn::{linear, Linear, VarBuilder, VarMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{apply_chain, AugmentError, ImageTensor};
use crate::manifest::{Dataset, ImageRecord, LabelMode, TaskSpec};
use backbone::{Backbone, InceptionV3, ToyNet, Vgg19};
use init::SeededVarMap;

pub use loss::{loss, loss_gradient, LossError};

/// Environment variable naming the directory with exported ImageNet weights.
pub const WEIGHTS_DIR_ENV: &str = "SENTIMENT_WEIGHTS_DIR";

const BACKBONE_PREFIX: &str = "backbone";
const HEAD_PREFIX: &str = "head";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(
        "pretrained {backbone} weights not found at {}.\n\
         No network fetch is attempted. To use ImageNet weights offline, export them once with\n\
         \n    python -c \"import torchvision, safetensors.torch as st; \
         m = torchvision.models.{torchvision}(weights='DEFAULT'); \
         st.save_file({{k: v.contiguous() for k, v in m.state_dict().items()}}, '{file}')\"\n\
         \nand place the file in ${env} (or ~/.cache/sentiment/weights), or pass pretrained=false.",
        path.display(),
        env = WEIGHTS_DIR_ENV,
    )]
    WeightsUnavailable {
        backbone: BackboneId,
        path: PathBuf,
        torchvision: &'static str,
        file: String,
    },
    #[error("weights file {} lacks tensor `{name}`", path.display())]
    MissingWeight { path: PathBuf, name: String },
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Image(#[from] AugmentError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneId {
    InceptionV3,
    Vgg19,
    Toy,
}

impl BackboneId {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneId::InceptionV3 => "inception_v3",
            BackboneId::Vgg19 => "vgg19",
            BackboneId::Toy => "toy",
        }
    }

    /// Square input side in pixels.
    pub fn input_size(self) -> usize {
        match self {
            BackboneId::InceptionV3 => 299,
            BackboneId::Vgg19 => 224,
            BackboneId::Toy => 64,
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            BackboneId::InceptionV3 => InceptionV3::FEATURES,
            BackboneId::Vgg19 => Vgg19::FEATURES,
            BackboneId::Toy => ToyNet::FEATURES,
        }
    }

    /// Input normalization of the backbone's ImageNet training recipe.
    pub fn normalization(self) -> Normalization {
        match self {
            // Inception-v3 was trained on inputs scaled to [-1, 1].
            BackboneId::InceptionV3 | BackboneId::Toy => Normalization {
                mean: [0.5; 3],
                std: [0.5; 3],
            },
            BackboneId::Vgg19 => Normalization {
                mean: [0.485, 0.456, 0.406],
                std: [0.229, 0.224, 0.225],
            },
        }
    }

    pub fn default_hidden_units(self) -> usize {
        match self {
            BackboneId::Toy => 32,
            _ => 256,
        }
    }

    fn torchvision_name(self) -> &'static str {
        match self {
            BackboneId::InceptionV3 => "inception_v3",
            BackboneId::Vgg19 => "vgg19",
            BackboneId::Toy => "toy",
        }
    }
}

impl fmt::Display for BackboneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BackboneId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inception_v3" => Ok(BackboneId::InceptionV3),
            "vgg19" => Ok(BackboneId::Vgg19),
            "toy" => Ok(BackboneId::Toy),
            _ => Err(ModelError::Config(format!("unknown backbone `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    Softmax,
    Sigmoid,
}

impl HeadMode {
    pub fn for_mode(mode: LabelMode) -> Self {
        match mode {
            LabelMode::SingleLabel => HeadMode::Softmax,
            LabelMode::MultiLabel => HeadMode::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneId,
    pub pretrained: bool,
    pub head_mode: HeadMode,
    pub num_outputs: usize,
    pub freeze_backbone: bool,
    pub head_hidden_units: usize,
}

impl ModelConfig {
    /// Default config for a task: full fine-tuning, ImageNet weights for
    /// the real backbones, and the backbone's default hidden width.
    pub fn for_task(spec: &TaskSpec, backbone: BackboneId) -> Self {
        Self {
            backbone,
            pretrained: backbone != BackboneId::Toy,
            head_mode: HeadMode::for_mode(spec.mode()),
            num_outputs: spec.num_labels(),
            freeze_backbone: false,
            head_hidden_units: backbone.default_hidden_units(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_outputs == 0 {
            return Err(ModelError::Config("num_outputs must be positive".into()));
        }
        Ok(())
    }

    /// Checks output width and head mode against a task.
    pub fn validate_for(&self, spec: &TaskSpec) -> Result<(), ModelError> {
        self.validate()?;
        if self.num_outputs != spec.num_labels() {
            return Err(ModelError::Config(format!(
                "num_outputs {} but {} has {} labels",
                self.num_outputs,
                spec.task_id(),
                spec.num_labels()
            )));
        }
        if self.head_mode != HeadMode::for_mode(spec.mode()) {
            return Err(ModelError::Config(format!(
                "{:?} head does not match {:?} task",
                self.head_mode,
                spec.mode()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Head {
    hidden: Option<Linear>,
    out: Linear,
}

impl Head {
    fn new(vb: VarBuilder, features: usize, hidden: usize, outputs: usize) -> candle_core::Result<Self> {
        let (hidden, width) = if hidden > 0 {
            (Some(linear(features, hidden, vb.pp("hidden"))?), hidden)
        } else {
            (None, features)
        };
        Ok(Self {
            hidden,
            out: linear(width, outputs, vb.pp("out"))?,
        })
    }

    fn forward(&self, pooled: &Tensor) -> candle_core::Result<Tensor> {
        let xs = match &self.hidden {
            Some(h) => pooled.apply(h)?.relu()?,
            None => pooled.clone(),
        };
        xs.apply(&self.out)
    }
}

/// A backbone plus task head, with all variables held in one [`VarMap`].
pub struct SentimentModel {
    cfg: ModelConfig,
    varmap: VarMap,
    backbone: Backbone,
    head: Head,
    device: Device,
}

impl fmt::Debug for SentimentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SentimentModel").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

/// Builds a model on the CPU. Weights are drawn from `seed`; with
/// `pretrained` set, the backbone is then overwritten by ImageNet weights
/// from the local weights directory.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<SentimentModel, ModelError> {
    let model = SentimentModel::random(cfg, seed)?;
    if cfg.pretrained && cfg.backbone != BackboneId::Toy {
        let path = pretrained_weights_path(cfg.backbone);
        if !path.exists() {
            return Err(ModelError::WeightsUnavailable {
                backbone: cfg.backbone,
                file: path
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                path,
                torchvision: cfg.backbone.torchvision_name(),
            });
        }
        model.load_backbone_weights(&path)?;
    }
    Ok(model)
}

/// Where pretrained weights for `backbone` are expected.
pub fn pretrained_weights_path(backbone: BackboneId) -> PathBuf {
    let dir = std::env::var_os(WEIGHTS_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache/sentiment/weights")))
        .unwrap_or_else(|| PathBuf::from("weights"));
    dir.join(format!("{}.safetensors", backbone.as_str()))
}

impl SentimentModel {
    /// Randomly initialized model; never touches the filesystem.
    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let device = Device::Cpu;
        let varmap = VarMap::new();
        let vb = SeededVarMap::builder(&varmap, seed, &device);
        let bvb = vb.pp(BACKBONE_PREFIX);
        let backbone = match cfg.backbone {
            BackboneId::InceptionV3 => Backbone::InceptionV3(InceptionV3::new(bvb)?),
            BackboneId::Vgg19 => Backbone::Vgg19(Vgg19::new(bvb)?),
            BackboneId::Toy => Backbone::Toy(ToyNet::new(bvb)?),
        };
        let head = Head::new(
            vb.pp(HEAD_PREFIX),
            cfg.backbone.feature_dim(),
            cfg.head_hidden_units,
            cfg.num_outputs,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            varmap,
            backbone,
            head,
            device,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Logits `[batch, num_outputs]` for normalized inputs `[batch, 3, s, s]`.
    ///
    /// A frozen backbone always runs in inference mode and is cut out of
    /// the gradient graph.
    pub fn forward_logits(&self, xs: &Tensor, train: bool) -> candle_core::Result<Tensor> {
        let features = if self.cfg.freeze_backbone {
            self.backbone.forward_t(xs, false)?.detach()
        } else {
            self.backbone.forward_t(xs, train)?
        };
        let pooled = features.mean(3)?.mean(2)?;
        self.head.forward(&pooled)
    }

    /// Activated scores `[batch, num_outputs]`.
    pub fn forward_scores(&self, xs: &Tensor) -> candle_core::Result<Tensor> {
        loss::activate(self.cfg.head_mode, &self.forward_logits(xs, false)?)
    }

    /// Named variables in name order. Batch-norm running statistics are
    /// buffers, not parameters, and are left out.
    pub fn named_parameters(&self) -> Vec<(String, Var)> {
        let data = self.varmap.data().lock().expect("varmap lock");
        let mut params: Vec<(String, Var)> = data
            .iter()
            .filter(|(name, _)| !name.ends_with("running_mean") && !name.ends_with("running_var"))
            .map(|(n, v)| (n.clone(), v.clone()))
            .collect();
        params.sort_by(|a, b| a.0.cmp(&b.0));
        params
    }

    /// Parameters the optimizer should update: the head only when the
    /// backbone is frozen, otherwise everything.
    pub fn trainable_parameters(&self, freeze_backbone: bool) -> Vec<(String, Var)> {
        self.named_parameters()
            .into_iter()
            .filter(|(name, _)| !freeze_backbone || name.starts_with(HEAD_PREFIX))
            .collect()
    }

    pub fn parameter_count(params: &[(String, Var)]) -> usize {
        params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    /// Copies backbone tensors from a safetensors file keyed by
    /// torchvision names. Extra tensors in the file are ignored.
    pub fn load_backbone_weights(&self, path: &Path) -> Result<(), ModelError> {
        let tensors = candle_core::safetensors::load(path, &self.device)?;
        let data = self.varmap.data().lock().expect("varmap lock");
        let prefix = format!("{BACKBONE_PREFIX}.");
        for (name, var) in data.iter() {
            let Some(key) = name.strip_prefix(&prefix) else {
                continue;
            };
            let t = tensors.get(key).ok_or_else(|| ModelError::MissingWeight {
                path: path.to_path_buf(),
                name: key.to_string(),
            })?;
            if t.dims() != var.dims() {
                return Err(ModelError::WeightShape {
                    name: key.to_string(),
                    expected: var.dims().to_vec(),
                    found: t.dims().to_vec(),
                });
            }
            var.set(&t.to_dtype(DType::F32)?)?;
        }
        Ok(())
    }

    pub fn save_weights(&self, path: &Path) -> Result<(), ModelError> {
        Ok(self.varmap.save(path)?)
    }

    pub fn load_weights(&mut self, path: &Path) -> Result<(), ModelError> {
        Ok(self.varmap.load(path)?)
    }
}

/// Decodes one record's image, applies its transform chain, resizes to the
/// backbone input and normalizes into planar layout.
pub fn prepare_input(
    ds: &Dataset,
    record: &ImageRecord,
    backbone: BackboneId,
    norm: &Normalization,
) -> Result<Vec<f32>, ModelError> {
    let img = ImageTensor::open(&ds.resolve_path(record))?;
    let img = apply_chain(&img, &record.transforms)?;
    let side = backbone.input_size() as u32;
    Ok(img.resize(side, side).to_chw(norm.mean, norm.std))
}

/// Stacks prepared inputs into `[batch, 3, side, side]`.
pub fn stack_inputs(inputs: Vec<Vec<f32>>, side: usize, device: &Device) -> candle_core::Result<Tensor> {
    let n = inputs.len();
    let flat: Vec<f32> = inputs.into_iter().flatten().collect();
    Tensor::from_vec(flat, (n, 3, side, side), device)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::TaskId;

    fn toy_cfg(task: TaskId, hidden: usize) -> ModelConfig {
        let spec = TaskSpec::builtin(task);
        ModelConfig {
            head_hidden_units: hidden,
            ..ModelConfig::for_task(&spec, BackboneId::Toy)
        }
    }

    fn random_input(batch: usize, side: usize, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f32> = (0..batch * 3 * side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, (batch, 3, side, side), &Device::Cpu).unwrap()
    }

    #[test]
    fn for_task_matches_mode() {
        let c = ModelConfig::for_task(&TaskSpec::builtin(TaskId::Task1), BackboneId::Vgg19);
        assert_eq!(c.head_mode, HeadMode::Softmax);
        assert_eq!(c.num_outputs, 3);
        assert!(c.pretrained);
        assert!(!c.freeze_backbone);
        assert_eq!(c.head_hidden_units, 256);
        let c = ModelConfig::for_task(&TaskSpec::builtin(TaskId::Task3), BackboneId::Toy);
        assert_eq!(c.head_mode, HeadMode::Sigmoid);
        assert!(!c.pretrained);
        assert!(c.validate_for(&TaskSpec::builtin(TaskId::Task2)).is_err());
    }

    #[test]
    fn zero_outputs_rejected() {
        let mut c = toy_cfg(TaskId::Task1, 0);
        c.num_outputs = 0;
        assert!(matches!(SentimentModel::random(&c, 0), Err(ModelError::Config(_))));
    }

    #[test]
    fn toy_output_width_per_batch_size() {
        let m = SentimentModel::random(&toy_cfg(TaskId::Task3, 32), 1).unwrap();
        for batch in [1, 3] {
            let s = m.forward_scores(&random_input(batch, 64, batch as u64)).unwrap();
            assert_eq!(s.dims(), &[batch, 11]);
        }
    }

    #[test]
    fn frozen_head_parameter_count() {
        let m = SentimentModel::random(&toy_cfg(TaskId::Task2, 0), 0).unwrap();
        let head = m.trainable_parameters(true);
        assert_eq!(SentimentModel::parameter_count(&head), (ToyNet::FEATURES + 1) * 7);
        let all = m.trainable_parameters(false);
        assert_eq!(all.len(), m.named_parameters().len());
        assert!(SentimentModel::parameter_count(&all) > SentimentModel::parameter_count(&head));
    }

    #[test]
    fn same_seed_same_model() {
        let a = SentimentModel::random(&toy_cfg(TaskId::Task1, 32), 7).unwrap();
        let b = SentimentModel::random(&toy_cfg(TaskId::Task1, 32), 7).unwrap();
        let x = random_input(2, 64, 0);
        let sa: Vec<Vec<f32>> = a.forward_scores(&x).unwrap().to_vec2().unwrap();
        let sb: Vec<Vec<f32>> = b.forward_scores(&x).unwrap().to_vec2().unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn missing_pretrained_weights_explain_offline_setup() {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var(WEIGHTS_DIR_ENV, dir.path());
        let spec = TaskSpec::builtin(TaskId::Task1);
        let cfg = ModelConfig::for_task(&spec, BackboneId::Vgg19);
        let err = build_model(&cfg, 0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ModelError::WeightsUnavailable { .. }));
        assert!(msg.contains("vgg19.safetensors"));
        assert!(msg.contains(WEIGHTS_DIR_ENV));
    }

    #[test]
    fn backbone_weights_load_by_torchvision_name() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_cfg(TaskId::Task1, 0);
        let source = SentimentModel::random(&cfg, 11).unwrap();
        let target = SentimentModel::random(&cfg, 12).unwrap();

        let mut export = std::collections::HashMap::new();
        for (name, var) in source.named_parameters() {
            if let Some(key) = name.strip_prefix("backbone.") {
                export.insert(key.to_string(), var.as_tensor().clone());
            }
        }
        let path = dir.path().join("w.safetensors");
        candle_core::safetensors::save(&export, &path).unwrap();
        target.load_backbone_weights(&path).unwrap();

        let x = random_input(1, 64, 5);
        let fa = source.backbone.forward_t(&x, false).unwrap().flatten_all().unwrap();
        let fb = target.backbone.forward_t(&x, false).unwrap().flatten_all().unwrap();
        assert_eq!(fa.to_vec1::<f32>().unwrap(), fb.to_vec1::<f32>().unwrap());

        export.remove("conv1.weight");
        candle_core::safetensors::save(&export, &path).unwrap();
        assert!(matches!(
            target.load_backbone_weights(&path),
            Err(ModelError::MissingWeight { .. })
        ));
    }
}
