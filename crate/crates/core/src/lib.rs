//! Rainfall-runoff sequence models (LSTM, vanilla Transformer encoder, and a
//! recurrence-free causal Transformer) on a small reverse-mode autodiff engine,
//! with the data pipeline, training loop, and hydrograph metrics needed to
//! benchmark them.

pub mod tensor;
pub mod models;
pub mod data;
pub mod train;
pub mod metrics;
pub mod verify;
