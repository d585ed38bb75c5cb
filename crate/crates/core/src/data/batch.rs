use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::norm::NormalizationStats;
use super::record::{BasinRecord, SplitSpec};
use super::{DataError, Result};
use crate::tensor::{RngStream, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    /// Target at every window position.
    Seq2Seq,
    /// Target at the window end only.
    Seq2One,
}

impl HeadMode {
    pub fn name(self) -> &'static str {
        match self {
            HeadMode::Seq2Seq => "seq2seq",
            HeadMode::Seq2One => "seq2one",
        }
    }
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadMode {
    type Err = DataError;

    fn from_str(s: &str) -> Result<HeadMode> {
        match s {
            "seq2seq" => Ok(HeadMode::Seq2Seq),
            "seq2one" => Ok(HeadMode::Seq2One),
            _ => Err(DataError::Param(format!("unknown head mode {s:?} (seq2seq | seq2one)"))),
        }
    }
}

/// A basin converted to model units: standardized NaN-free inputs and
/// standardized discharge with `NaN` kept for missing days.
#[derive(Clone, Debug)]
pub struct PreparedBasin {
    pub basin_id: String,
    pub start: NaiveDate,
    pub input_dim: usize,
    /// Row-major `[n_days, input_dim]`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Training discharge std in standardized units; `NaN` if unobserved.
    pub basin_std: f64,
}

impl PreparedBasin {
    pub fn new(record: &BasinRecord, stats: &NormalizationStats) -> Result<PreparedBasin> {
        stats.check_record(record)?;
        let input_dim = stats.input_dim();
        let mut x = Vec::with_capacity(record.n_days() * input_dim);
        for day in 0..record.n_days() {
            stats.standardize_inputs(record, day, &mut x);
        }
        let y = record.discharge.iter().map(|&q| stats.discharge.standardize(q)).collect();
        Ok(PreparedBasin {
            basin_id: record.basin_id.clone(),
            start: record.start,
            input_dim,
            x,
            y,
            basin_std: stats.basin_std_standardized(&record.basin_id).unwrap_or(f64::NAN),
        })
    }

    pub fn n_days(&self) -> usize {
        self.y.len()
    }

    /// Inputs for the `seq_len` days ending at `end`, `[seq_len, input_dim]` row-major.
    pub fn window(&self, end: usize, seq_len: usize) -> &[f64] {
        &self.x[(end + 1 - seq_len) * self.input_dim..(end + 1) * self.input_dim]
    }
}

#[derive(Clone, Debug)]
pub struct Batch {
    /// `[batch, seq_len, input_dim]`
    pub x: Tensor,
    /// `[batch, seq_len | 1, 1]`, zero where unobserved.
    pub y: Tensor,
    /// Same shape as `y`; 1 where observed.
    pub mask: Tensor,
    pub basin_std: Vec<f64>,
    /// `(basin index, window end day)` per sample.
    pub picks: Vec<(usize, usize)>,
}

impl Batch {
    pub fn observed(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.0).count()
    }
}

/// Uniform sampler over `(basin, window end)` pairs whose window lies in
/// the training range. Basins without observed training discharge or
/// without a full window are left out.
#[derive(Clone, Debug)]
pub struct WindowSampler {
    basins: Vec<PreparedBasin>,
    /// Inclusive range of valid window ends per kept basin.
    ends: Vec<(usize, usize)>,
    seq_len: usize,
}

impl WindowSampler {
    pub fn new(
        records: &[BasinRecord],
        stats: &NormalizationStats,
        split: &SplitSpec,
        seq_len: usize,
    ) -> Result<WindowSampler> {
        if seq_len == 0 {
            return Err(DataError::Param("seq_len must be >= 1".into()));
        }
        let mut basins = Vec::new();
        let mut ends = Vec::new();
        let mut longest = 0;
        for r in records {
            let Some((lo, hi)) = r.span(split.train_start, split.train_end) else { continue };
            longest = longest.max(hi - lo + 1);
            if hi - lo + 1 < seq_len {
                continue;
            }
            let prepared = PreparedBasin::new(r, stats)?;
            if !prepared.basin_std.is_finite() {
                continue;
            }
            basins.push(prepared);
            ends.push((lo + seq_len - 1, hi));
        }
        if basins.is_empty() {
            return Err(DataError::Param(if longest < seq_len {
                format!("seq_len {seq_len} exceeds the longest training window ({longest} days)")
            } else {
                "no basin has observed discharge in the training window".to_string()
            }));
        }
        Ok(WindowSampler { basins, ends, seq_len })
    }

    pub fn basins(&self) -> &[PreparedBasin] {
        &self.basins
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn input_dim(&self) -> usize {
        self.basins[0].input_dim
    }

    /// Number of distinct windows available for `basin`.
    pub fn windows_in(&self, basin: usize) -> usize {
        self.ends[basin].1 - self.ends[basin].0 + 1
    }

    pub fn sample(&self, batch_size: usize, rng: &mut RngStream, head: HeadMode) -> Result<Batch> {
        if batch_size == 0 {
            return Err(DataError::Param("batch_size must be >= 1".into()));
        }
        let (t, d) = (self.seq_len, self.input_dim());
        let targets = match head {
            HeadMode::Seq2Seq => t,
            HeadMode::Seq2One => 1,
        };
        let mut x = Vec::with_capacity(batch_size * t * d);
        let mut y = Vec::with_capacity(batch_size * targets);
        let mut mask = Vec::with_capacity(batch_size * targets);
        let mut basin_std = Vec::with_capacity(batch_size);
        let mut picks = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let b = rng.index(self.basins.len());
            let (lo, hi) = self.ends[b];
            let end = lo + rng.index(hi - lo + 1);
            let basin = &self.basins[b];
            x.extend_from_slice(basin.window(end, t));
            for &q in &basin.y[end + 1 - targets..=end] {
                y.push(if q.is_nan() { 0.0 } else { q });
                mask.push(if q.is_nan() { 0.0 } else { 1.0 });
            }
            basin_std.push(basin.basin_std);
            picks.push((b, end));
        }
        Ok(Batch {
            x: Tensor::from_vec(&[batch_size, t, d], x).map_err(|e| DataError::Param(e.to_string()))?,
            y: Tensor::from_vec(&[batch_size, targets, 1], y).map_err(|e| DataError::Param(e.to_string()))?,
            mask: Tensor::from_vec(&[batch_size, targets, 1], mask).map_err(|e| DataError::Param(e.to_string()))?,
            basin_std,
            picks,
        })
    }
}

/// Samples a single batch; see [`WindowSampler`].
pub fn make_batch(
    records: &[BasinRecord],
    stats: &NormalizationStats,
    split: &SplitSpec,
    seq_len: usize,
    batch_size: usize,
    rng: &mut RngStream,
    head: HeadMode,
) -> Result<Batch> {
    WindowSampler::new(records, stats, split, seq_len)?.sample(batch_size, rng, head)
}
