use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::{BasinRecord, SplitSpec};
use super::{DataError, Result};

/// Lower bound applied to every standard deviation before division.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

impl VariableStats {
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinDischargeStats {
    pub mean: f64,
    pub std: f64,
    /// Observed training days.
    pub count: usize,
}

/// Training-window statistics. Inputs are listed in model-input order:
/// forcing columns, then static attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub inputs: Vec<VariableStats>,
    pub discharge: VariableStats,
    pub basins: BTreeMap<String, BasinDischargeStats>,
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq_dev: f64,
}

/// Two-pass mean and population std of the finite values.
fn moments(values: impl Iterator<Item = f64> + Clone) -> Moments {
    let (n, sum) = values.clone().filter(|v| !v.is_nan()).fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return Moments::default();
    }
    let mean = sum / n as f64;
    let sum_sq_dev = values.filter(|v| !v.is_nan()).map(|v| (v - mean) * (v - mean)).sum();
    Moments { n, sum, sum_sq_dev }
}

impl Moments {
    fn stats(&self, name: &str) -> Result<(f64, f64)> {
        if self.n == 0 {
            return Err(DataError::Stats(format!("variable {name} has no observed value in the training window")));
        }
        let mean = self.sum / self.n as f64;
        Ok((mean, (self.sum_sq_dev / self.n as f64).sqrt().max(STD_FLOOR)))
    }
}

impl NormalizationStats {
    pub fn input_dim(&self) -> usize {
        self.inputs.len()
    }

    /// Standard deviation of basin `id`'s training discharge in units of
    /// the globally standardized target.
    pub fn basin_std_standardized(&self, id: &str) -> Option<f64> {
        self.basins.get(id).map(|b| b.std / self.discharge.std)
    }

    /// Standardized input row for `day` of `record`; missing forcings become 0.
    pub fn standardize_inputs(&self, record: &BasinRecord, day: usize, out: &mut Vec<f64>) {
        let mut stats = self.inputs.iter();
        for block in &record.forcings {
            for &v in block.row(day) {
                let s = stats.next().expect("input width checked");
                out.push(if v.is_nan() { 0.0 } else { s.standardize(v) });
            }
        }
        for &v in &record.attributes {
            let s = stats.next().expect("input width checked");
            out.push(if v.is_nan() { 0.0 } else { s.standardize(v) });
        }
    }

    pub fn check_record(&self, record: &BasinRecord) -> Result<()> {
        let names = record.feature_names();
        if names.len() != self.inputs.len() || names.iter().zip(&self.inputs).any(|(n, s)| *n != s.name) {
            return Err(DataError::Param(format!(
                "basin {} features {names:?} do not match the normalization inputs",
                record.basin_id
            )));
        }
        Ok(())
    }
}

/// Statistics over the training window of every record. Forcing and
/// discharge moments pool all basins' training days; attribute moments
/// pool one value per basin. Standard deviations use the population form.
pub fn compute_norm_stats(records: &[BasinRecord], split: &SplitSpec) -> Result<NormalizationStats> {
    split.validate()?;
    let first = records.first().ok_or_else(|| DataError::Stats("no basins".into()))?;
    let names = first.feature_names();
    for r in records {
        if r.feature_names() != names {
            return Err(DataError::Stats(format!(
                "basin {} has features {:?}, expected {names:?}",
                r.basin_id,
                r.feature_names()
            )));
        }
    }
    let spans: Vec<Option<(usize, usize)>> =
        records.iter().map(|r| r.span(split.train_start, split.train_end)).collect();
    let windows = || records.iter().zip(&spans).filter_map(|(r, s)| s.map(|s| (r, s)));

    let mut inputs = Vec::with_capacity(names.len());
    let mut col = 0;
    for (b, block) in first.forcings.iter().enumerate() {
        for v in 0..block.n_vars() {
            let values = windows().flat_map(move |(r, (lo, hi))| {
                r.forcings[b].column(v).skip(lo).take(hi - lo + 1)
            });
            let (mean, std) = moments(values).stats(&names[col])?;
            inputs.push(VariableStats { name: names[col].clone(), mean, std });
            col += 1;
        }
    }
    for a in 0..first.attributes.len() {
        let values = windows().map(move |(r, _)| r.attributes[a]);
        let (mean, std) = moments(values).stats(&names[col])?;
        inputs.push(VariableStats { name: names[col].clone(), mean, std });
        col += 1;
    }

    let q = windows().flat_map(|(r, (lo, hi))| r.discharge[lo..=hi].iter().copied());
    let (mean, std) = moments(q).stats("discharge")?;
    let discharge = VariableStats { name: "discharge".into(), mean, std };

    let mut basins = BTreeMap::new();
    for (r, (lo, hi)) in windows() {
        let m = moments(r.discharge[lo..=hi].iter().copied());
        if m.n > 0 {
            let (mean, std) = m.stats("discharge")?;
            basins.insert(r.basin_id.clone(), BasinDischargeStats { mean, std, count: m.n });
        }
    }
    Ok(NormalizationStats { inputs, discharge, basins })
}
