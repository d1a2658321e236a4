use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

fn default_char_kernel_width() -> usize {
    3
}

fn default_teacher_epochs() -> Option<usize> {
    None
}

/// Every training hyperparameter, paper-faithful defaults plus the decided
/// gaps (clip norm, kernel width, patience, seeds, ablation flags).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub d_a: usize,
    pub d_w: usize,
    pub noise_dim: usize,
    pub attention_d: usize,
    /// Fusion weight between destination and bias predictions at inference.
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub distill_weight_v: f64,
    pub distill_weight_q: f64,
    pub clip_norm: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub enable_gan: bool,
    pub enable_distill: bool,
    /// Window (in character positions) of the char-CNN convolution; odd.
    #[serde(default = "default_char_kernel_width")]
    pub char_kernel_width: usize,
    /// Teacher pretraining epochs; `None` falls back to `epochs`.
    #[serde(default = "default_teacher_epochs")]
    pub teacher_epochs: Option<usize>,
}

impl TrainingConfig {
    /// Paper-scale defaults.
    pub fn paper(seed: u64) -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            epochs: 30,
            batch_size: 512,
            hidden: 1024,
            d_a: 100,
            d_w: 300,
            noise_dim: 2048,
            attention_d: 64,
            beta: 0.7,
            alpha1: 0.5,
            alpha2: 0.3,
            lambda1: 0.5,
            lambda2: 0.5,
            distill_weight_v: 0.5,
            distill_weight_q: 0.5,
            clip_norm: 5.0,
            early_stop_patience: 5,
            seed,
            enable_gan: true,
            enable_distill: true,
            char_kernel_width: 3,
            teacher_epochs: None,
        }
    }

    /// Desk-scale defaults: shrunken batch/hidden/noise/embedding dims so a
    /// full training run finishes in seconds on one core.
    pub fn desk(seed: u64) -> Self {
        TrainingConfig {
            batch_size: 64,
            hidden: 64,
            noise_dim: 32,
            d_a: 16,
            d_w: 32,
            attention_d: 16,
            epochs: 10,
            ..Self::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be positive, got {v}")))
            }
        }
        fn non_negative(name: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "{name} must be non-negative, got {v}"
                )))
            }
        }
        positive("learning_rate", self.learning_rate)?;
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
            ("d_a", self.d_a),
            ("d_w", self.d_w),
            ("noise_dim", self.noise_dim),
            ("attention_d", self.attention_d),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Validation(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        non_negative("alpha1", self.alpha1)?;
        non_negative("alpha2", self.alpha2)?;
        non_negative("lambda1", self.lambda1)?;
        non_negative("lambda2", self.lambda2)?;
        non_negative("distill_weight_v", self.distill_weight_v)?;
        non_negative("distill_weight_q", self.distill_weight_q)?;
        if !(self.clip_norm > 0.0) {
            return Err(Error::Validation(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if self.char_kernel_width == 0 || self.char_kernel_width % 2 == 0 {
            return Err(Error::Validation(format!(
                "char_kernel_width must be odd, got {}",
                self.char_kernel_width
            )));
        }
        Ok(())
    }

    pub fn teacher_epochs(&self) -> usize {
        self.teacher_epochs.unwrap_or(self.epochs)
    }

    /// SHA-256 over the canonical JSON encoding; ties checkpoints to the
    /// exact configuration that produced them.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

/// Hex-encoded SHA-256.
pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_defaults_match_reported_settings() {
        let c = TrainingConfig::paper(0);
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.epochs, 30);
        assert_eq!(c.batch_size, 512);
        assert_eq!(c.hidden, 1024);
        assert_eq!(c.d_a, 100);
        assert_eq!(c.d_w, 300);
        assert_eq!(c.noise_dim, 2048);
        assert_eq!(c.attention_d, 64);
        assert_eq!(c.beta, 0.7);
        assert_eq!(c.alpha1, 0.5);
        assert_eq!(c.alpha2, 0.3);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn fingerprint_stable_and_sensitive() {
        let a = TrainingConfig::desk(1);
        let b = TrainingConfig::desk(1);
        let c = TrainingConfig::desk(2);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = TrainingConfig::desk(0);
        c.beta = 1.5;
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        let mut c = TrainingConfig::desk(0);
        c.char_kernel_width = 2;
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::desk(0);
        c.learning_rate = -1.0;
        assert!(c.validate().is_err());
    }
}
