//! Transfer-learning pipeline for visual sentiment classification of
//! disaster-related images.
//!
//! The pipeline covers three task shapes: one single-label task with three
//! sentiment classes and two multi-label tasks with seven and eleven labels.
//! Stages run in the order manifest loading, upsampling, geometric
//! augmentation, fine-tuning, threshold decoding and weighted-F1 evaluation.
//!
//! The data-side stages ([`manifest`], [`balance`], [`augment`],
//! [`evaluate`]) are pure Rust and build for `wasm32`. The model, training
//! loop and command line live behind the default `train` feature.

pub mod augment;
pub mod balance;
pub mod evaluate;
pub mod manifest;
pub mod seed;

#[cfg(feature = "train")]
pub mod cli;
#[cfg(feature = "train")]
pub mod model;
#[cfg(feature = "train")]
pub mod train;

pub use manifest::{builtin_task_spec, Dataset, ImageRecord, LabelMode, Origin, Split, TaskId, TaskSpec};
