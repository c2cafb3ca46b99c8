use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Joint,
    StagewiseThenJoint,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "stagewise-then-joint" | "stagewise" => Ok(Self::StagewiseThenJoint),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Fixed channel SNR during training.
    pub train_snr_db: f64,
    pub batch_size: usize,
    /// Epochs of the joint phase.
    pub epochs: usize,
    /// Epochs of each single-level phase in stagewise mode.
    pub stage_epochs: usize,
    pub lr_initial: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    /// Per-level loss weights; empty means uniform.
    pub level_loss_weights: Vec<f64>,
    /// Copies of every message per epoch, each with its own noise.
    pub repetitions: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub mode: TrainMode,
    /// Subtract re-encoded ground-truth bits (instead of decisions) while
    /// training.
    pub teacher_forcing: bool,
    /// Random messages per level in the fixed validation set.
    pub val_messages: usize,
    /// Noise realizations per validation message.
    pub val_noise: usize,
    /// Messages used to calibrate the frozen scale.
    pub calibration_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_snr_db: 0.0,
            batch_size: 1024,
            epochs: 100,
            stage_epochs: 10,
            lr_initial: 0.001,
            lr_decay: 0.97,
            level_loss_weights: Vec::new(),
            repetitions: 3,
            early_stop_patience: 10,
            seed: 0,
            mode: TrainMode::Joint,
            teacher_forcing: true,
            val_messages: 4096,
            val_noise: 4,
            calibration_samples: 1 << 14,
        }
    }
}

impl TrainConfig {
    /// Settings for micro models (`B = 4`, `n = 16`) at 6 dB: 64-message
    /// batches, 16 copies of each message per epoch, a small validation set.
    pub fn micro() -> Self {
        Self {
            train_snr_db: 6.0,
            batch_size: 64,
            epochs: 30,
            stage_epochs: 10,
            repetitions: 16,
            val_messages: 256,
            val_noise: 4,
            calibration_samples: 1 << 12,
            ..Self::default()
        }
    }

    pub fn validate(&self, levels: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay {} outside (0, 1]", self.lr_decay)));
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return Err(Error::Config(format!("lr_initial {} must be positive", self.lr_initial)));
        }
        if self.train_snr_db.is_nan() || self.train_snr_db == f64::NEG_INFINITY {
            return Err(Error::Config("train_snr_db must be a number".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.val_messages == 0 || self.val_noise == 0 {
            return Err(Error::Config("validation set must be non-empty".into()));
        }
        if !self.level_loss_weights.is_empty() {
            if self.level_loss_weights.len() != levels {
                return Err(Error::Config(format!(
                    "{} loss weights for {levels} levels",
                    self.level_loss_weights.len()
                )));
            }
            if self.level_loss_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::Config("loss weights must be non-negative".into()));
            }
            if self.level_loss_weights.iter().all(|&w| w == 0.0) {
                return Err(Error::Config("loss weights are all zero".into()));
            }
        }
        Ok(())
    }

    pub fn weights(&self, levels: usize) -> Vec<f64> {
        if self.level_loss_weights.is_empty() {
            vec![1.0; levels]
        } else {
            self.level_loss_weights.clone()
        }
    }

    /// `lr_initial · lr_decay^epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr_initial * self.lr_decay.powi(epoch as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size, 1024);
        assert_eq!(c.epochs, 100);
        assert_eq!(c.lr_initial, 0.001);
        assert_eq!(c.repetitions, 3);
        assert!(c.teacher_forcing);
        c.validate(4).unwrap();
    }

    #[test]
    fn schedule_is_exponential() {
        let c = TrainConfig::default();
        for e in 0..100 {
            let want = 0.001 * 0.97f64.powi(e as i32);
            assert!((c.learning_rate(e) - want).abs() < 1e-18);
        }
    }

    #[test]
    fn invalid_values() {
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            c.validate(2).is_err()
        };
        assert!(bad(|c| c.batch_size = 0));
        assert!(bad(|c| c.lr_decay = 0.0));
        assert!(bad(|c| c.lr_decay = 1.5));
        assert!(bad(|c| c.level_loss_weights = vec![0.0, 0.0]));
        assert!(bad(|c| c.level_loss_weights = vec![1.0]));
        assert!(bad(|c| c.level_loss_weights = vec![-1.0, 1.0]));
        assert!(bad(|c| c.repetitions = 0));
    }
}
