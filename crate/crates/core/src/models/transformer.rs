use super::attention::{encoder_layer, sinusoidal_pe, EncoderParams, Mask};
use super::{linear, BoundParams, ModelSpec, Result};
use crate::tensor::{RngStream, Tape, Var};

#[derive(Clone, Debug)]
pub struct TransformerParams {
    pub embed_w: Var,
    pub embed_b: Var,
    pub layers: Vec<EncoderParams>,
    pub final_gain: Var,
    pub final_bias: Var,
    pub head_w: Var,
    pub head_b: Var,
}

impl TransformerParams {
    pub fn bind(p: &BoundParams<'_>, spec: &ModelSpec) -> Result<TransformerParams> {
        Ok(TransformerParams {
            embed_w: p.get("embed.weight")?,
            embed_b: p.get("embed.bias")?,
            layers: (0..spec.n_layers).map(|l| EncoderParams::bind(p, l)).collect::<Result<_>>()?,
            final_gain: p.get("final_ln.gain")?,
            final_bias: p.get("final_ln.bias")?,
            head_w: p.get("head.weight")?,
            head_b: p.get("head.bias")?,
        })
    }
}

fn encode(
    tape: &Tape,
    mut h: Var,
    p: &TransformerParams,
    spec: &ModelSpec,
    mask: Mask,
    mut rng: Option<&mut RngStream>,
) -> Result<Var> {
    for layer in &p.layers {
        h = encoder_layer(tape, h, layer, spec.n_heads, mask, spec.dropout, rng.as_deref_mut())?;
    }
    Ok(tape.layer_norm(h, p.final_gain, p.final_bias, 1e-5)?)
}

/// Embedding + sinusoidal positions, unmasked encoder, head on the last
/// position: `[batch, 1]`.
pub fn transformer_vanilla_forward(
    tape: &Tape,
    x: Var,
    p: &TransformerParams,
    spec: &ModelSpec,
    rng: Option<&mut RngStream>,
) -> Result<Var> {
    let dims = tape.shape(x).dims().to_vec();
    let (batch, t) = (dims[0], dims[1]);
    let e = linear(tape, x, p.embed_w, p.embed_b)?;
    let pe = tape.constant(&sinusoidal_pe(t, spec.d_model)?);
    let h = tape.add(e, pe)?;
    let h = encode(tape, h, p, spec, Mask::None, rng)?;
    let last = tape.slice(h, 1, t - 1..t)?;
    let last = tape.reshape(last, &[batch, spec.d_model])?;
    linear(tape, last, p.head_w, p.head_b)
}

/// Embedding without positions, causally masked encoder, head on every
/// position: `[batch, T, 1]`.
pub fn transformer_modified_forward(
    tape: &Tape,
    x: Var,
    p: &TransformerParams,
    spec: &ModelSpec,
    rng: Option<&mut RngStream>,
) -> Result<Var> {
    let h = linear(tape, x, p.embed_w, p.embed_b)?;
    let h = encode(tape, h, p, spec, Mask::Causal, rng)?;
    linear(tape, h, p.head_w, p.head_b)
}
