use super::{dropout, linear, BoundParams, ModelError, Result};
use crate::tensor::{RngStream, Tape, Tensor, Var};

/// LSTM parameters on a tape. Gate blocks along the `4h` axis are ordered
/// input, forget, cell candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    /// `[input_dim, 4h]`
    pub w_x: Var,
    /// `[h, 4h]`
    pub w_h: Var,
    /// `[4h]`
    pub bias: Var,
    /// `[h, 1]`
    pub head_w: Var,
    /// `[1]`
    pub head_b: Var,
}

impl LstmParams {
    pub fn bind(p: &BoundParams<'_>) -> Result<LstmParams> {
        Ok(LstmParams {
            w_x: p.get("lstm.w_x")?,
            w_h: p.get("lstm.w_h")?,
            bias: p.get("lstm.bias")?,
            head_w: p.get("head.weight")?,
            head_b: p.get("head.bias")?,
        })
    }

    fn hidden(&self, tape: &Tape) -> usize {
        tape.shape(self.w_h).dim(0)
    }
}

/// Gate math given the input pre-activation `x_t · W_x` (`[batch, 4h]`).
fn cell_from_projected(
    tape: &Tape,
    xw: Var,
    h_prev: Var,
    c_prev: Var,
    p: &LstmParams,
    hidden: usize,
) -> Result<(Var, Var)> {
    let hw = tape.matmul(h_prev, p.w_h)?;
    let pre = tape.add(xw, hw)?;
    let pre = tape.add(pre, p.bias)?;
    let gate = |k: usize| tape.slice(pre, 1, k * hidden..(k + 1) * hidden);
    let i = tape.sigmoid(gate(0)?);
    let f = tape.sigmoid(gate(1)?);
    let g = tape.tanh(gate(2)?);
    let o = tape.sigmoid(gate(3)?);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let h = tape.mul(o, tape.tanh(c))?;
    Ok((h, c))
}

/// One LSTM step: `x_t [batch, input_dim]`, `h_prev`/`c_prev [batch, h]`.
///
/// `i, f, o = sigmoid(.)`, `g = tanh(.)`, `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn lstm_cell(tape: &Tape, x_t: Var, h_prev: Var, c_prev: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let hidden = p.hidden(tape);
    let xs = tape.shape(x_t);
    let (hs, cs) = (tape.shape(h_prev), tape.shape(c_prev));
    if xs.rank() != 2 || hs.dims() != [xs.dim(0), hidden] || cs.dims() != hs.dims() {
        return Err(ModelError::Spec(format!(
            "lstm_cell shapes: x {xs}, h {hs}, c {cs} with hidden {hidden}"
        )));
    }
    let xw = tape.matmul(x_t, p.w_x)?;
    cell_from_projected(tape, xw, h_prev, c_prev, p, hidden)
}

/// Unrolls the cell over `x [batch, T, input_dim]` from zero state and
/// applies the linear head to every hidden state: `[batch, T, 1]`.
pub fn lstm_forward(
    tape: &Tape,
    x: Var,
    p: &LstmParams,
    dropout_rate: f64,
    rng: Option<&mut RngStream>,
) -> Result<Var> {
    let dims = tape.shape(x).dims().to_vec();
    let (batch, steps) = (dims[0], dims[1]);
    let hidden = p.hidden(tape);
    let xw_all = tape.matmul(x, p.w_x)?;
    let zeros = tape.constant(&Tensor::zeros(&[batch, hidden])?);
    let (mut h, mut c) = (zeros, zeros);
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let xw = tape.slice(xw_all, 1, t..t + 1)?;
        let xw = tape.reshape(xw, &[batch, 4 * hidden])?;
        (h, c) = cell_from_projected(tape, xw, h, c, p, hidden)?;
        outputs.push(tape.reshape(h, &[batch, 1, hidden])?);
    }
    let hs = if outputs.len() == 1 { outputs[0] } else { tape.concat(&outputs, 1)? };
    let hs = dropout(tape, hs, dropout_rate, rng)?;
    linear(tape, hs, p.head_w, p.head_b)
}
