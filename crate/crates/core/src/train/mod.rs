//! Losses, the ADAM optimizer, the learning-rate schedule, augmentation and the
//! fit/evaluate loops.

mod adam;
mod augment;
mod data;
mod fit;
mod loss;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use augment::{random_rotation, rotate_features, rotation_matrix, Augmentation};
pub use data::{load_dataset, DatasetEntry, Dataset, Sample, Task};
pub use fit::{evaluate, fit, predict_labels, EpochMetrics, EvalMetrics, FitOutputs, FitResult, METRICS_HEADER};
pub use loss::label_smoothed_cross_entropy;

use crate::net::{Head, NetworkConfig};
use crate::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_DECAY_FACTOR: f64 = 0.5;
pub const DEFAULT_DECAY_EVERY: usize = 50;
pub const CLASSIFICATION_LABEL_SMOOTHING: f64 = 0.2;

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}
fn default_decay_factor() -> f64 {
    DEFAULT_DECAY_FACTOR
}
fn default_decay_every() -> usize {
    DEFAULT_DECAY_EVERY
}
fn default_batch() -> usize {
    1
}
fn default_eval_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_decay_every")]
    pub decay_every: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// `None` picks 0.2 for classification and 0 for segmentation.
    #[serde(default)]
    pub label_smoothing: Option<f64>,
    #[serde(default)]
    pub augmentation: Augmentation,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate the test set every this many epochs; the last epoch is always evaluated.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            decay_factor: DEFAULT_DECAY_FACTOR,
            decay_every: DEFAULT_DECAY_EVERY,
            batch_size: 1,
            label_smoothing: None,
            augmentation: Augmentation::None,
            seed: 0,
            eval_every: 1,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail(format!("train.lr = {} must be positive", self.lr));
        }
        if self.epochs == 0 {
            return fail("train.epochs must be at least 1".into());
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return fail(format!("train.decay_factor = {} must lie in (0, 1]", self.decay_factor));
        }
        if self.decay_every == 0 {
            return fail("train.decay_every must be at least 1".into());
        }
        if self.batch_size != 1 {
            return fail(format!("train.batch_size = {}: only single-shape batches are supported", self.batch_size));
        }
        if let Some(a) = self.label_smoothing {
            if !(0.0..1.0).contains(&a) {
                return fail(format!("train.label_smoothing = {a} must lie in [0, 1)"));
            }
        }
        if self.eval_every == 0 {
            return fail("train.eval_every must be at least 1".into());
        }
        if self.checkpoint_every == Some(0) {
            return fail("train.checkpoint_every must be at least 1".into());
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch: `lr * decay_factor^floor((epoch - 1) / decay_every)`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let drops = epoch.saturating_sub(1) / self.decay_every;
        self.lr * self.decay_factor.powi(drops as i32)
    }

    pub fn resolved_label_smoothing(&self, network: &NetworkConfig) -> f64 {
        self.label_smoothing.unwrap_or(match network.head {
            Head::GlobalMeanSoftmax => CLASSIFICATION_LABEL_SMOOTHING,
            _ => 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_every_fifty_epochs() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate(1), 0.001);
        assert_eq!(c.learning_rate(50), 0.001);
        assert_eq!(c.learning_rate(51), 0.0005);
        assert_eq!(c.learning_rate(151), 0.000125);
    }

    #[test]
    fn rejects_bad_values() {
        let c = TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            label_smoothing: Some(1.0),
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
