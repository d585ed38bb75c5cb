use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Lstm,
    TransformerVanilla,
    TransformerModified,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lstm, Variant::TransformerVanilla, Variant::TransformerModified];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lstm => "lstm",
            Variant::TransformerVanilla => "transformer_vanilla",
            Variant::TransformerModified => "transformer_modified",
        }
    }

    /// Whether the model emits one prediction per input position.
    pub fn is_sequence_output(self) -> bool {
        !matches!(self, Variant::TransformerVanilla)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::Spec(format!("unknown variant `{s}`")))
    }
}

/// Architecture hyperparameters. `hidden_dim` is read by the LSTM only;
/// `d_model`, `n_heads`, `n_layers` and `d_ff` by the Transformers only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub seq_len: usize,
}

impl ModelSpec {
    /// Desk-scale defaults.
    pub fn new(variant: Variant, input_dim: usize) -> ModelSpec {
        ModelSpec {
            variant,
            input_dim,
            hidden_dim: 64,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            dropout: 0.1,
            seq_len: 365,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Spec(m));
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1".into());
        }
        if self.seq_len == 0 {
            return bad("seq_len must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        match self.variant {
            Variant::Lstm => {
                if self.hidden_dim == 0 {
                    return bad("hidden_dim must be >= 1".into());
                }
            }
            Variant::TransformerVanilla | Variant::TransformerModified => {
                if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
                    return bad("d_model, n_heads, n_layers and d_ff must all be >= 1".into());
                }
                if self.d_model % self.n_heads != 0 {
                    return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
                }
                if self.variant == Variant::TransformerVanilla && self.d_model % 2 != 0 {
                    return bad(format!("sinusoidal encoding needs an even d_model, got {}", self.d_model));
                }
            }
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}
