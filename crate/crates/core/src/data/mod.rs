//! Basin data: ingestion of the per-basin CSV layout, unit conversion,
//! training-window normalization, multi-product forcing fusion, window
//! sampling, and a synthetic linear-reservoir generator.

mod batch;
mod fuse;
mod ingest;
mod layout;
mod norm;
mod record;
mod synth;
mod units;

pub use batch::{make_batch, Batch, HeadMode, PreparedBasin, WindowSampler};
pub use fuse::fuse_forcings;
pub use ingest::{
    ingest_basin, parse_attributes, parse_forcing, parse_manifest, parse_streamflow, AttributeRow, AttributeTable,
    ForcingTable, StreamflowTable,
};
pub use layout::{load_dataset, write_dataset, DataLayout};
pub use norm::{compute_norm_stats, BasinDischargeStats, NormalizationStats, VariableStats, STD_FLOOR};
pub use record::{BasinRecord, ForcingBlock, SplitSpec};
pub use synth::{add_noisy_product, simulate_reservoir, synth_linear_reservoir, ReservoirTrace, SynthParams};
pub use units::{cfs_to_mm_per_day, mm_per_day_to_cfs, MISSING_SENTINEL};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("{file}: {message}")]
    Ingest { file: String, message: String },
    #[error("parameter error: {0}")]
    Param(String),
    #[error("statistics error: {0}")]
    Stats(String),
    #[error("fusion error: {0}")]
    Fusion(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> DataError {
        DataError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
