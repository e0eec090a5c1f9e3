//! Representation learning for binary time-series movement prediction.
//!
//! The pipeline trains a dilated-causal-convolution encoder with a
//! conditional-mutual-information contrastive loss, then classifies the
//! frozen context vectors with logistic regression. The crate covers:
//!
//! - `autograd` — a minimal reverse-mode differentiation tape with the
//!   numeric primitives the encoder and losses need, plus Adam.
//! - `features` — OHLCV ingestion, technical indicators, trend labels,
//!   sliding windows, normalization, and a synthetic data generator.
//! - `encoder` — stacked dilated-causal residual blocks with stock-identity
//!   conditioning and a context-vector head (attention or pooling variants).
//! - `contrastive` — the pairwise critic, XOR-labelled pair sampling,
//!   contrastive loss, and the CMI lower-bound diagnostic.
//! - `downstream` — logistic-regression head, accuracy/MCC metrics, and the
//!   generalization-gap report.
//! - `train` / `runner` — training loops, checkpointing, ablation harness,
//!   and report writers behind the CLI.

pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod contrastive;
pub mod downstream;
pub mod encoder;
pub mod error;
pub mod features;
pub mod report;
pub mod rng;
pub mod runner;
pub mod train;

pub use error::{Error, Result};
