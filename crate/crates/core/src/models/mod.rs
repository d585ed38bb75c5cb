//! The three benchmarked sequence architectures.
//!
//! * [`Variant::Lstm`]: single-layer LSTM unrolled from zero state, linear head
//!   on every step.
//! * [`Variant::TransformerVanilla`]: linear embedding plus sinusoidal position
//!   encoding, unmasked pre-norm encoder stack, head on the last position only.
//! * [`Variant::TransformerModified`]: linear embedding without position
//!   encoding, causally masked pre-norm encoder stack, head on every position.
//!
//! All models take `x: [batch, seq_len, input_dim]`. The LSTM and modified
//! Transformer return `[batch, seq_len, 1]`; the vanilla Transformer returns
//! `[batch, 1]`.

mod attention;
mod io;
mod lstm;
mod spec;
mod transformer;
mod weights;

pub use attention::{
    causal_mask, encoder_layer, multi_head_attention, sinusoidal_pe, AttentionOutput, AttentionParams,
    EncoderParams, Mask,
};
pub use io::{read_archive, write_archive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use lstm::{lstm_cell, lstm_forward, LstmParams};
pub use spec::{ModelSpec, Variant};
pub use transformer::{transformer_modified_forward, transformer_vanilla_forward, TransformerParams};
pub use weights::{param_count, param_listing, BoundParams, Model, ModelWeights};

use thiserror::Error;

use crate::tensor::{RngStream, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("weight file format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Inverted dropout. Identity when `rng` is `None` (evaluation) or `rate == 0`.
pub fn dropout(tape: &Tape, x: Var, rate: f64, rng: Option<&mut RngStream>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let shape = tape.shape(x);
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..shape.numel()).map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect();
    let mask = tape.constant(&Tensor::from_shape(shape, mask)?);
    Ok(tape.mul(x, mask)?)
}

/// `x · w + b` over the last axis of `x`.
pub(crate) fn linear(tape: &Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add(y, b)?)
}
