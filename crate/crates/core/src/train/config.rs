use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::data::HeadMode;
use crate::models::Variant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error scaled by `1 / (basin_std + eps)^2`.
    BasinWeighted,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadSetting {
    /// `seq2one` for the vanilla Transformer, `seq2seq` otherwise.
    Auto,
    Seq2Seq,
    Seq2One,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_iterations: u64,
    pub seq_len: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Loss-trace period in iterations.
    pub eval_every: u64,
    pub head_mode: HeadSetting,
    pub loss: LossKind,
    pub loss_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            n_iterations: 2000,
            seq_len: 365,
            seed: 0,
            clip_norm: 1.0,
            eval_every: 50,
            head_mode: HeadSetting::Auto,
            loss: LossKind::BasinWeighted,
            loss_eps: super::DEFAULT_LOSS_EPS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be > 0, got {}", self.clip_norm));
        }
        if self.batch_size == 0 || self.seq_len == 0 || self.eval_every == 0 {
            return bad("batch_size, seq_len and eval_every must be >= 1".into());
        }
        if !(self.loss_eps > 0.0) {
            return bad(format!("loss_eps must be > 0, got {}", self.loss_eps));
        }
        Ok(())
    }

    pub fn resolve_head(&self, variant: Variant) -> Result<HeadMode> {
        match (self.head_mode, variant) {
            (HeadSetting::Seq2Seq, Variant::TransformerVanilla) => Err(TrainError::Config(
                "the vanilla transformer predicts the last position only; use head_mode = seq2one".into(),
            )),
            (HeadSetting::Auto, Variant::TransformerVanilla) | (HeadSetting::Seq2One, _) => Ok(HeadMode::Seq2One),
            (HeadSetting::Auto, _) | (HeadSetting::Seq2Seq, _) => Ok(HeadMode::Seq2Seq),
        }
    }
}
