//! Sentinel: a from-scratch deep-learning pipeline for three-class visual
//! anomaly detection (admin / intruder / no human).
//!
//! Everything here is plain CPU Rust with no ML framework behind it:
//!
//! - [`tensor`] — dense row-major `f32` tensors and the arithmetic every
//!   other module builds on.
//! - [`nn`] — forward and backward passes for the layer types the network
//!   uses (conv, depthwise conv, batch norm, dense, softmax, cross-entropy).
//! - [`model`] — MobileNetV2-style backbones plus a classifier head,
//!   transfer-learning freeze semantics, and the SDLW weights format.
//! - [`optim`] — Adam (bias-corrected) and plain SGD.
//! - [`data`] — PPM decoding, bilinear resize, pixel normalization,
//!   augmentation, stratified splits, and batching.
//! - [`metrics`] — confusion matrix, per-class accuracy/precision/recall/F1,
//!   and the JSON report.
//! - [`stats`] — pooled two-sample t-test with an incomplete-beta t CDF.
//! - [`bench`] — single-stream inference latency / FPS measurement.
//! - [`train`] — the training loop the CLI drives.
//! - [`config`] — INI-style run configuration shared by the CLI commands.

pub mod bench;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
