use super::{dropout, linear, BoundParams, ModelError, Result};
use crate::tensor::{RngStream, Tape, Tensor, Var};

/// Additive bias standing in for -inf above the diagonal of a causal mask.
const MASKED: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    None,
    Causal,
}

/// Sinusoidal position table `[seq_len, d_model]`:
/// `PE(pos, 2i) = sin(pos / 10000^(2i/d))`, `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn sinusoidal_pe(seq_len: usize, d_model: usize) -> Result<Tensor> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(ModelError::Spec(format!("sinusoidal encoding needs an even d_model, got {d_model}")));
    }
    if seq_len == 0 {
        return Err(ModelError::Spec("sinusoidal encoding needs seq_len >= 1".into()));
    }
    let mut data = vec![0.0; seq_len * d_model];
    for pos in 0..seq_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / d_model as f64);
            data[pos * d_model + 2 * i] = angle.sin();
            data[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Ok(Tensor::from_vec(&[seq_len, d_model], data)?)
}

/// `[t, t]` additive bias: 0 on and below the diagonal, -1e9 above.
pub fn causal_mask(t: usize) -> Result<Tensor> {
    let data = (0..t * t).map(|k| if k % t > k / t { MASKED } else { 0.0 }).collect();
    Ok(Tensor::from_vec(&[t, t], data)?)
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderParams {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub attn: AttentionParams,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl EncoderParams {
    pub fn bind(p: &BoundParams<'_>, layer: usize) -> Result<EncoderParams> {
        let g = |s: &str| p.get(&format!("layers.{layer}.{s}"));
        Ok(EncoderParams {
            ln1_gain: g("ln1.gain")?,
            ln1_bias: g("ln1.bias")?,
            attn: AttentionParams {
                wq: g("attn.wq")?,
                bq: g("attn.bq")?,
                wk: g("attn.wk")?,
                bk: g("attn.bk")?,
                wv: g("attn.wv")?,
                bv: g("attn.bv")?,
                wo: g("attn.wo")?,
                bo: g("attn.bo")?,
            },
            ln2_gain: g("ln2.gain")?,
            ln2_bias: g("ln2.bias")?,
            w1: g("ffn.w1")?,
            b1: g("ffn.b1")?,
            w2: g("ffn.w2")?,
            b2: g("ffn.b2")?,
        })
    }
}

pub struct AttentionOutput {
    /// `[batch, T, d_model]`
    pub output: Var,
    /// Per-head attention weights, each `[batch, T, T]`.
    pub weights: Vec<Var>,
}

/// Scaled dot-product attention over `x [batch, T, d_model]` with `n_heads`
/// heads; heads are concatenated and output-projected.
pub fn multi_head_attention(
    tape: &Tape,
    x: Var,
    p: &AttentionParams,
    n_heads: usize,
    mask: Mask,
) -> Result<AttentionOutput> {
    let dims = tape.shape(x).dims().to_vec();
    if dims.len() != 3 {
        return Err(ModelError::Spec(format!("attention input must be [batch, T, d], got {dims:?}")));
    }
    let (t, d) = (dims[1], dims[2]);
    if n_heads == 0 || d % n_heads != 0 {
        return Err(ModelError::Spec(format!("d_model {d} not divisible by {n_heads} heads")));
    }
    let dh = d / n_heads;
    let q = linear(tape, x, p.wq, p.bq)?;
    let k = linear(tape, x, p.wk, p.bk)?;
    let v = linear(tape, x, p.wv, p.bv)?;
    let bias = match mask {
        Mask::None => None,
        Mask::Causal => Some(tape.constant(&causal_mask(t)?)),
    };
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (tape.slice(q, 2, cols.clone())?, tape.slice(k, 2, cols.clone())?, tape.slice(v, 2, cols)?)
        };
        let scores = tape.matmul(qh, tape.transpose(kh)?)?;
        let mut scores = tape.scale(scores, scale);
        if let Some(b) = bias {
            scores = tape.add(scores, b)?;
        }
        let a = tape.softmax(scores, 2)?;
        heads.push(tape.matmul(a, vh)?);
        weights.push(a);
    }
    let merged = if n_heads == 1 { heads[0] } else { tape.concat(&heads, 2)? };
    let output = linear(tape, merged, p.wo, p.bo)?;
    Ok(AttentionOutput { output, weights })
}

/// Pre-norm encoder block:
/// `h = x + drop(MHA(LN1(x)))`, `out = h + drop(FFN(LN2(h)))`, FFN = linear, relu, linear.
pub fn encoder_layer(
    tape: &Tape,
    x: Var,
    p: &EncoderParams,
    n_heads: usize,
    mask: Mask,
    dropout_rate: f64,
    mut rng: Option<&mut RngStream>,
) -> Result<Var> {
    const EPS: f64 = 1e-5;
    let normed = tape.layer_norm(x, p.ln1_gain, p.ln1_bias, EPS)?;
    let attn = multi_head_attention(tape, normed, &p.attn, n_heads, mask)?.output;
    let attn = dropout(tape, attn, dropout_rate, rng.as_deref_mut())?;
    let h = tape.add(x, attn)?;

    let normed = tape.layer_norm(h, p.ln2_gain, p.ln2_bias, EPS)?;
    let hidden = tape.relu(linear(tape, normed, p.w1, p.b1)?);
    let ff = linear(tape, hidden, p.w2, p.b2)?;
    let ff = dropout(tape, ff, dropout_rate, rng)?;
    Ok(tape.add(h, ff)?)
}
