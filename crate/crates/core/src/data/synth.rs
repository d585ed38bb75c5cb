use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::record::{BasinRecord, ForcingBlock};
use super::{DataError, Result};
use crate::tensor::RngStream;

/// Generator settings. Per-basin constants are drawn uniformly from the
/// `[low, high]` ranges; equal bounds pin the value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub k: (f64, f64),
    pub et_rate: (f64, f64),
    pub s0: (f64, f64),
    pub area_km2: (f64, f64),
    pub wet_prob: f64,
    /// Mean wet-day depth, mm.
    pub wet_mean: f64,
    /// Mean of the seasonal evaporative-demand index, mm/day.
    pub pet_mean: f64,
    /// Relative amplitude of the seasonal index.
    pub pet_amplitude: f64,
    pub start: NaiveDate,
    pub product: String,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            k: (0.15, 0.35),
            et_rate: (0.02, 0.08),
            s0: (0.0, 20.0),
            area_km2: (50.0, 500.0),
            wet_prob: 0.3,
            wet_mean: 5.0,
            pet_mean: 3.0,
            pet_amplitude: 0.5,
            start: NaiveDate::from_ymd_opt(1989, 10, 1).expect("valid date"),
            product: "synthetic".into(),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (f64, f64), ok: &dyn Fn(f64) -> bool| {
            if !(lo <= hi) || !ok(lo) || !ok(hi) {
                Err(DataError::Param(format!("synthetic {name} range [{lo}, {hi}] is invalid")))
            } else {
                Ok(())
            }
        };
        range("k", self.k, &|k| k > 0.0 && k < 1.0)?;
        range("et_rate", self.et_rate, &|e| (0.0..1.0).contains(&e))?;
        range("s0", self.s0, &|s| s >= 0.0 && s.is_finite())?;
        range("area_km2", self.area_km2, &|a| a > 0.0 && a.is_finite())?;
        if self.k.1 + self.et_rate.1 > 1.0 {
            return Err(DataError::Param("k + et_rate must not exceed 1".into()));
        }
        if !(0.0..=1.0).contains(&self.wet_prob) {
            return Err(DataError::Param(format!("wet_prob {} outside [0, 1]", self.wet_prob)));
        }
        if !(self.wet_mean > 0.0) || !(self.pet_mean >= 0.0) || !(0.0..=1.0).contains(&self.pet_amplitude) {
            return Err(DataError::Param("wet_mean must be > 0, pet_mean >= 0, pet_amplitude in [0, 1]".into()));
        }
        if self.product.is_empty() {
            return Err(DataError::Param("synthetic product name is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirTrace {
    /// `S_0 ..= S_n`
    pub storage: Vec<f64>,
    pub discharge: Vec<f64>,
    pub evaporation: Vec<f64>,
}

/// `Q_t = k S_t`, `E_t = et_rate S_t`, `S_{t+1} = max(0, S_t + P_t - E_t - Q_t)`.
pub fn simulate_reservoir(precip: &[f64], k: f64, et_rate: f64, s0: f64) -> Result<ReservoirTrace> {
    if !(k > 0.0 && k < 1.0) {
        return Err(DataError::Param(format!("k must be in (0, 1), got {k}")));
    }
    if !(et_rate >= 0.0 && et_rate < 1.0) || !(s0 >= 0.0) {
        return Err(DataError::Param(format!("need 0 <= et_rate < 1 and s0 >= 0, got {et_rate}, {s0}")));
    }
    let mut storage = Vec::with_capacity(precip.len() + 1);
    let mut discharge = Vec::with_capacity(precip.len());
    let mut evaporation = Vec::with_capacity(precip.len());
    let mut s = s0;
    storage.push(s);
    for &p in precip {
        let q = k * s;
        let e = et_rate * s;
        discharge.push(q);
        evaporation.push(e);
        s = (s + p - e - q).max(0.0);
        storage.push(s);
    }
    Ok(ReservoirTrace { storage, discharge, evaporation })
}

/// Seasonal evaporative-demand index for `date`, peaking in late June.
fn pet_index(params: &SynthParams, date: NaiveDate) -> f64 {
    let phase = 2.0 * PI * (date.ordinal() as f64 - 81.0) / 365.25;
    params.pet_mean * (1.0 + params.pet_amplitude * phase.sin())
}

fn draw(rng: &mut RngStream, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.uniform(lo, hi)
    }
}

/// Linear-reservoir basins `synth_000, synth_001, ...`. Each basin uses
/// child stream `i` of `rng`, so basin `i` does not depend on `n_basins`.
/// Forcings: precipitation and a state-independent seasonal
/// evaporative-demand index. Attributes: `k, et_rate, s0`.
pub fn synth_linear_reservoir(
    n_basins: usize,
    n_days: usize,
    params: &SynthParams,
    rng: &RngStream,
) -> Result<Vec<BasinRecord>> {
    params.validate()?;
    if n_basins == 0 || n_days == 0 {
        return Err(DataError::Param(format!("need n_basins >= 1 and n_days >= 1, got {n_basins}, {n_days}")));
    }
    let mut records = Vec::with_capacity(n_basins);
    for i in 0..n_basins {
        let mut r = rng.split(i as u64);
        let k = draw(&mut r, params.k);
        let et = draw(&mut r, params.et_rate);
        let s0 = draw(&mut r, params.s0);
        let area = draw(&mut r, params.area_km2);
        let precip: Vec<f64> = (0..n_days)
            .map(|_| if r.bernoulli(params.wet_prob) { r.exponential(params.wet_mean) } else { 0.0 })
            .collect();
        let trace = simulate_reservoir(&precip, k, et, s0)?;
        let mut values = Vec::with_capacity(2 * n_days);
        for (day, &p) in precip.iter().enumerate() {
            values.push(p);
            values.push(pet_index(params, params.start + chrono::Days::new(day as u64)));
        }
        records.push(BasinRecord {
            basin_id: format!("synth_{i:03}"),
            area_km2: area,
            attribute_names: vec!["k".into(), "et_rate".into(), "s0".into()],
            attributes: vec![k, et, s0],
            start: params.start,
            discharge: trace.discharge,
            forcings: vec![ForcingBlock {
                product: params.product.clone(),
                variables: vec!["prcp".into(), "pet".into()],
                values,
            }],
        });
    }
    Ok(records)
}

/// Adds product `name` to every record: a copy of product `source` with
/// independent Gaussian noise of std `noise_std` on every value.
pub fn add_noisy_product(
    records: &mut [BasinRecord],
    source: &str,
    name: &str,
    noise_std: f64,
    rng: &RngStream,
) -> Result<()> {
    if !(noise_std >= 0.0) {
        return Err(DataError::Param(format!("noise_std must be >= 0, got {noise_std}")));
    }
    for (i, record) in records.iter_mut().enumerate() {
        let src = record
            .forcing(source)
            .ok_or_else(|| DataError::Fusion(format!("basin {} has no product {source}", record.basin_id)))?;
        let mut r = rng.split(i as u64);
        let block = ForcingBlock {
            product: name.to_string(),
            variables: src.variables.clone(),
            values: src.values.iter().map(|&v| v + r.gaussian(0.0, noise_std)).collect(),
        };
        let start = record.start;
        record.add_forcing(block, start)?;
    }
    Ok(())
}
