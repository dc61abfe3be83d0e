//! Self-describing checkpoints: a safetensors weights file plus a JSON
//! sidecar with everything prediction needs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackboneId, HeadMode, ModelConfig, ModelError, Normalization, SentimentModel};
use crate::evaluate::DecodeOptions;
use crate::manifest::TaskSpec;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub task: TaskSpec,
    pub backbone: BackboneId,
    pub head_mode: HeadMode,
    pub num_outputs: usize,
    pub head_hidden_units: usize,
    pub freeze_backbone: bool,
    pub input_size: usize,
    pub normalization: Normalization,
    pub decode: DecodeOptions,
    pub learning_rate: f64,
    pub adam: AdamParams,
    /// SHA-256 of the run's serialized training config.
    pub config_hash: String,
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_weighted_f1: Option<f64>,
    /// Weights file name, relative to the sidecar.
    pub weights: String,
}

impl CheckpointMeta {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone,
            pretrained: false,
            head_mode: self.head_mode,
            num_outputs: self.num_outputs,
            freeze_backbone: self.freeze_backbone,
            head_hidden_units: self.head_hidden_units,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::Metadata(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        self.model_config()
            .validate_for(&self.task)
            .map_err(|e| ModelError::Metadata(e.to_string()))
    }
}

/// Sidecar path for a weights file: `ckpt-best.safetensors` → `ckpt-best.json`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes weights then sidecar, each through a temporary file and rename.
pub fn save_checkpoint(model: &SentimentModel, meta: &CheckpointMeta, weights: &Path) -> Result<(), ModelError> {
    let tmp = weights.with_extension("safetensors.tmp");
    model.save_weights(&tmp)?;
    std::fs::rename(&tmp, weights).map_err(io_err(weights))?;
    let sidecar = sidecar_path(weights);
    let tmp = sidecar.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(meta)?).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, &sidecar).map_err(io_err(&sidecar))?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<CheckpointMeta, ModelError> {
    let sidecar = if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        sidecar_path(path)
    };
    let text = std::fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    meta.validate()?;
    Ok(meta)
}

/// Loads a checkpoint from either its weights file or its sidecar.
pub fn load_checkpoint(path: &Path) -> Result<(SentimentModel, CheckpointMeta), ModelError> {
    let meta = read_meta(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let weights = dir.join(&meta.weights);
    let mut model = SentimentModel::random(&meta.model_config(), 0)?;
    model.load_weights(&weights)?;
    Ok((model, meta))
}
