//! Hydrograph skill metrics, per-basin evaluation, ensemble aggregation and
//! report emission.

mod cdf;
mod ensemble;
mod evaluate;
mod hydro;
mod report;
mod write;

pub use cdf::{cdf_series, CdfSeries};
pub use ensemble::{prediction_mean, summarize_ensemble, EnsembleSummary, MetricAggregate};
pub use evaluate::{
    evaluate_checkpoint, evaluate_model, report_from_simulations, simulate, BasinSimulation, Predictor, ReplayOracle,
};
pub use hydro::{
    fhv, flv, kge, nse, observed, KgeComponents, DEFAULT_HIGH_FRAC, DEFAULT_LOG_FLOOR, DEFAULT_LOW_FRAC,
};
pub use report::{median, BasinMetrics, Metric, MetricOptions, MetricReport};
pub use write::{write_cdf_csv, write_report_csv, write_summary_csv, write_summary_table};

use thiserror::Error;

use crate::data::DataError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("series lengths differ: obs {obs}, sim {sim}")]
    Length { obs: usize, sim: usize },
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MetricError>;
