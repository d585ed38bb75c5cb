use chrono::NaiveDate;

use super::report::{BasinMetrics, MetricOptions, MetricReport};
use super::{MetricError, Result};
use crate::data::{BasinRecord, NormalizationStats, PreparedBasin, SplitSpec};
use crate::models::Model;
use crate::tensor::Tensor;
use crate::train::Checkpoint;

/// Windows evaluated per forward pass.
const INFERENCE_BATCH: usize = 256;

/// Produces standardized discharge for the windows of `basin` ending at
/// each day in `ends`.
pub trait Predictor {
    fn predict(&self, basin: &PreparedBasin, ends: &[usize], seq_len: usize) -> Result<Vec<f64>>;
}

impl Predictor for Model {
    fn predict(&self, basin: &PreparedBasin, ends: &[usize], seq_len: usize) -> Result<Vec<f64>> {
        let d = basin.input_dim;
        if d != self.spec().input_dim {
            return Err(MetricError::Evaluation(format!(
                "input_dim mismatch: data has {d} features, model expects {}",
                self.spec().input_dim
            )));
        }
        let mut out = Vec::with_capacity(ends.len());
        for chunk in ends.chunks(INFERENCE_BATCH) {
            let mut x = Vec::with_capacity(chunk.len() * seq_len * d);
            for &end in chunk {
                x.extend_from_slice(basin.window(end, seq_len));
            }
            let x = Tensor::from_vec(&[chunk.len(), seq_len, d], x).map_err(crate::models::ModelError::from)?;
            out.extend(self.predict_last(&x)?);
        }
        Ok(out)
    }
}

/// Stub model that returns the observed standardized discharge at each
/// window end (0 where unobserved).
#[derive(Clone, Copy, Debug, Default)]
pub struct ReplayOracle;

impl Predictor for ReplayOracle {
    fn predict(&self, basin: &PreparedBasin, ends: &[usize], _seq_len: usize) -> Result<Vec<f64>> {
        Ok(ends.iter().map(|&e| if basin.y[e].is_nan() { 0.0 } else { basin.y[e] }).collect())
    }
}

/// Observed and simulated discharge (mm/day) over the evaluated days.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinSimulation {
    pub basin_id: String,
    /// Date of the first evaluated day; days are consecutive.
    pub start: Option<NaiveDate>,
    pub obs: Vec<f64>,
    pub sim: Vec<f64>,
}

/// Sliding seq-to-one inference over the test window: every test day with
/// a full `seq_len` lookback inside the record is predicted from the window
/// ending on it. Predictions are destandardized to mm/day.
pub fn simulate(
    predictor: &dyn Predictor,
    records: &[BasinRecord],
    stats: &NormalizationStats,
    split: &SplitSpec,
    seq_len: usize,
) -> Result<Vec<BasinSimulation>> {
    if seq_len == 0 {
        return Err(MetricError::Evaluation("seq_len must be >= 1".into()));
    }
    let mut sims = Vec::with_capacity(records.len());
    for record in records {
        let ends: Vec<usize> = match record.span(split.test_start, split.test_end) {
            Some((lo, hi)) => (lo.max(seq_len - 1)..=hi).collect(),
            None => Vec::new(),
        };
        if ends.is_empty() {
            sims.push(BasinSimulation { basin_id: record.basin_id.clone(), start: None, obs: vec![], sim: vec![] });
            continue;
        }
        let prepared = PreparedBasin::new(record, stats)?;
        let z = predictor.predict(&prepared, &ends, seq_len)?;
        if z.len() != ends.len() {
            return Err(MetricError::Evaluation(format!(
                "predictor returned {} values for {} windows",
                z.len(),
                ends.len()
            )));
        }
        sims.push(BasinSimulation {
            basin_id: record.basin_id.clone(),
            start: Some(record.date(ends[0])),
            obs: ends.iter().map(|&e| record.discharge[e]).collect(),
            sim: z.iter().map(|&v| stats.discharge.destandardize(v)).collect(),
        });
    }
    if sims.iter().all(|s| s.obs.is_empty()) {
        return Err(MetricError::Evaluation(format!(
            "no basin has a test day with a full {seq_len}-day lookback"
        )));
    }
    Ok(sims)
}

pub fn report_from_simulations(sims: &[BasinSimulation], opts: &MetricOptions) -> MetricReport {
    MetricReport { basins: sims.iter().map(|s| BasinMetrics::compute(&s.basin_id, &s.obs, &s.sim, opts)).collect() }
}

pub fn evaluate_model(
    predictor: &dyn Predictor,
    records: &[BasinRecord],
    stats: &NormalizationStats,
    split: &SplitSpec,
    seq_len: usize,
    opts: &MetricOptions,
) -> Result<(MetricReport, Vec<BasinSimulation>)> {
    let sims = simulate(predictor, records, stats, split, seq_len)?;
    Ok((report_from_simulations(&sims, opts), sims))
}

/// [`evaluate_model`] with the checkpoint's statistics, split and window length.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    records: &[BasinRecord],
    opts: &MetricOptions,
) -> Result<(MetricReport, Vec<BasinSimulation>)> {
    evaluate_model(&ckpt.model, records, &ckpt.stats, &ckpt.split, ckpt.model.spec().seq_len, opts)
}
