use super::{Result, TrainError};
use crate::models::ModelWeights;

/// Adam moments, one buffer pair per parameter tensor in weight order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(weights: &ModelWeights) -> AdamState {
        let zeros: Vec<Vec<f64>> = weights.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update from the gradients stored on `weights`:
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`. Tensors without a gradient
/// buffer are left untouched. Nothing is modified when any gradient is
/// non-finite.
pub fn adam_step(weights: &mut ModelWeights, state: &mut AdamState, lr: f64) -> Result<()> {
    if state.m.len() != weights.len() {
        return Err(TrainError::Config(format!(
            "optimizer tracks {} tensors, model has {}",
            state.m.len(),
            weights.len()
        )));
    }
    for (name, t) in weights.iter() {
        if let Some(g) = t.grad() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteGradient { param: name.to_string(), step: state.t + 1 });
            }
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((_, t), (m, v)) in weights.iter_mut().zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let Some(g) = t.grad().map(<[f64]>::to_vec) else { continue };
        for (((p, g), m), v) in t.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Global L2 norm over every gradient buffer.
pub fn global_grad_norm(weights: &ModelWeights) -> f64 {
    weights.iter().filter_map(|(_, t)| t.grad()).flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all gradients by `max_norm / norm` when the global norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(weights: &mut ModelWeights, max_norm: f64) -> f64 {
    let norm = global_grad_norm(weights);
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, t) in weights.iter_mut() {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
    norm
}
