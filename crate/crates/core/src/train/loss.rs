use super::{LossKind, Result, TrainError};
use crate::tensor::{Tape, Tensor, Var};

pub const DEFAULT_LOSS_EPS: f64 = 0.1;

/// Mean over observed elements of `(yhat - y)^2 / (basin_std + eps)^2`.
///
/// `y` and `mask` are `[batch, n, 1]`; `yhat` must hold the same number
/// of elements. `basin_std` has one entry per batch row.
pub fn basin_weighted_mse(
    tape: &Tape,
    yhat: Var,
    y: &Tensor,
    mask: &Tensor,
    basin_std: &[f64],
    eps: f64,
) -> Result<Var> {
    masked_loss(tape, yhat, y, mask, basin_std, LossKind::BasinWeighted, eps)
}

/// Masked squared error, weighted per `kind`.
pub fn masked_loss(
    tape: &Tape,
    yhat: Var,
    y: &Tensor,
    mask: &Tensor,
    basin_std: &[f64],
    kind: LossKind,
    eps: f64,
) -> Result<Var> {
    let batch = y.dims()[0];
    if y.dims() != mask.dims() || tape.shape(yhat).numel() != y.numel() || basin_std.len() != batch {
        return Err(TrainError::Loss(format!(
            "shape mismatch: yhat {}, y {}, mask {}, basin_std {}",
            tape.shape(yhat),
            y.shape(),
            mask.shape(),
            basin_std.len()
        )));
    }
    if basin_std.iter().any(|s| !(*s >= 0.0)) {
        return Err(TrainError::Loss("basin_std must be >= 0".into()));
    }
    let observed = mask.data().iter().filter(|&&m| m > 0.0).count();
    if observed == 0 {
        return Err(TrainError::Loss("every target in the batch is masked".into()));
    }
    let per_row = y.numel() / batch;
    let weights: Vec<f64> = mask
        .data()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let w = match kind {
                LossKind::BasinWeighted => 1.0 / (basin_std[i / per_row] + eps).powi(2),
                LossKind::Mse => 1.0,
            };
            if m > 0.0 {
                w / observed as f64
            } else {
                0.0
            }
        })
        .collect();
    let yhat = tape.reshape(yhat, y.dims())?;
    let diff = tape.sub(yhat, tape.constant(y))?;
    let sq = tape.mul(diff, diff)?;
    let weighted = tape.mul(sq, tape.constant(&Tensor::from_shape(y.shape().clone(), weights)?))?;
    Ok(tape.sum(weighted))
}
