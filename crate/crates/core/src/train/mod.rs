//! Loss, optimizer, the training loop, checkpoints and seeded ensembles.

mod checkpoint;
mod config;
mod ensemble;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use config::{HeadSetting, LossKind, TrainConfig};
pub use ensemble::train_ensemble;
pub use loss::{basin_weighted_mse, masked_loss, DEFAULT_LOSS_EPS};
pub use optim::{adam_step, clip_gradients, global_grad_norm, AdamState};
pub use trainer::{train, train_observed, TrainOutcome};

use thiserror::Error;

use crate::data::DataError;
use crate::models::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss error: {0}")]
    Loss(String),
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: u64, loss: f64 },
    #[error("non-finite gradient in `{param}` at optimizer step {step}")]
    NonFiniteGradient { param: String, step: u64 },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
