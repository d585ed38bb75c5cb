//! Dense `f64` tensors with a define-by-run reverse-mode autodiff tape.
//!
//! Values live in [`Tensor`]; differentiable computation happens on a [`Tape`],
//! which hands out [`Var`] node handles. A tape is consumed by
//! [`Tape::backward`], which returns the [`Gradients`] of every node that
//! needed one.
//!
//! Broadcasting for the elementwise ops follows a single rule: the right-hand
//! operand's shape is aligned to the trailing dimensions of the left-hand
//! operand, and each of its dimensions must either equal the left-hand extent
//! or be `1` (stretched). The output always has the left-hand shape. Anything
//! else is a [`TensorError::Shape`].

mod gradcheck;
mod kernels;
mod rng;
mod shape;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP, GRAD_FLOOR};
pub use rng::RngStream;
pub use shape::Shape;
pub use tape::{Activation, FaultGuard, Gradients, OpKind, Reduction, Tape, Var};
pub use tensor::{Init, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("contract error: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
