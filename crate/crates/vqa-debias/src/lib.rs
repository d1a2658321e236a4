//! Bias-robust visual question answering on synthetic prior-shift corpora.
//!
//! The pipeline encodes questions with a char-CNN + self-attention + LSTM
//! stack and scenes with object-interaction self-attention, trains a bias
//! head and a destination head under a weighted cross-entropy / adversarial
//! feature-debiasing / dual-teacher distillation objective, and fuses both
//! heads at inference with a weighted average.

pub mod config;
pub mod data_synth;
pub mod error;
pub mod losses;
pub mod question_encoder;

pub use error::{Error, Result};
