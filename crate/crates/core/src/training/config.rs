use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an aux-conditioned recognizer treats the auxiliary network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxTraining {
    /// Aux network frozen; only the recognizer learns from the CTC loss.
    #[default]
    Sequential,
    /// Both networks learn from the combined loss.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Weight of the recognition loss in joint training.
    pub alpha: f64,
    /// Weights of the L1 and L2 cross-entropies in aux pretraining.
    pub aux_weights: [f64; 2],
    pub freeze_conv: bool,
    pub aux_training: AuxTraining,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            alpha: 0.8,
            aux_weights: [0.5, 0.5],
            freeze_conv: true,
            aux_training: AuxTraining::Sequential,
            shuffle: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.aux_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("aux loss weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Loss components of one step or one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_pr: f64,
    pub loss_l1: f64,
    pub loss_l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recognition_only(loss_pr: f64) -> Self {
        Self {
            loss_pr,
            loss_l1: 0.0,
            loss_l2: 0.0,
            total: loss_pr,
        }
    }

    /// `α·pr + (1 − α)·(l1 + l2)`.
    pub fn joint(loss_pr: f64, loss_l1: f64, loss_l2: f64, alpha: f64) -> Self {
        Self {
            loss_pr,
            loss_l1,
            loss_l2,
            total: alpha * loss_pr + (1.0 - alpha) * (loss_l1 + loss_l2),
        }
    }

    /// `w₁·l1 + w₂·l2`, the aux pretraining objective.
    pub fn aux(loss_l1: f64, loss_l2: f64, weights: [f64; 2]) -> Self {
        Self {
            loss_pr: 0.0,
            loss_l1,
            loss_l2,
            total: weights[0] * loss_l1 + weights[1] * loss_l2,
        }
    }
}

/// One line of the JSON Lines training log. The eight core keys are always
/// present (null when not applicable).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub split: String,
    pub loss_pr: Option<f64>,
    pub loss_l1: Option<f64>,
    pub loss_l2: Option<f64>,
    pub total: Option<f64>,
    pub per: Option<f64>,
    pub frr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_accuracy: Option<f64>,
}

impl LogRecord {
    pub fn losses(epoch: usize, split: &str, l: &LossBreakdown) -> Self {
        Self {
            epoch,
            split: split.into(),
            loss_pr: Some(l.loss_pr),
            loss_l1: Some(l.loss_l1),
            loss_l2: Some(l.loss_l2),
            total: Some(l.total),
            per: None,
            frr: None,
            step: None,
            l1_accuracy: None,
            l2_accuracy: None,
        }
    }
}

pub fn log_to_jsonl(records: &[LogRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Tracks the best validation metric and decides when to stop.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    lower_is_better: bool,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize, lower_is_better: bool) -> Self {
        Self {
            patience,
            lower_is_better,
            best: None,
        }
    }

    /// Records an epoch's metric; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        let better = match self.best {
            None => true,
            Some((_, b)) if self.lower_is_better => metric < b,
            Some((_, b)) => metric > b,
        };
        if better {
            self.best = Some((epoch, metric));
        }
        better
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        self.best.is_some_and(|(e, _)| epoch >= e + self.patience)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}
