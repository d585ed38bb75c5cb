use serde::{Deserialize, Serialize};

use super::MetricError;

type Result<T> = std::result::Result<T, MetricError>;

pub const DEFAULT_HIGH_FRAC: f64 = 0.02;
pub const DEFAULT_LOW_FRAC: f64 = 0.30;
pub const DEFAULT_LOG_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgeComponents {
    pub kge: f64,
    /// Pearson correlation.
    pub r: f64,
    /// `std(sim) / std(obs)`
    pub alpha: f64,
    /// `mean(sim) / mean(obs)`
    pub beta: f64,
}

/// The `(obs, sim)` pairs where `obs` is observed.
pub fn observed(obs: &[f64], sim: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if obs.len() != sim.len() {
        return Err(MetricError::Length { obs: obs.len(), sim: sim.len() });
    }
    let (o, s): (Vec<f64>, Vec<f64>) = obs.iter().zip(sim).filter(|(o, _)| !o.is_nan()).map(|(o, s)| (*o, *s)).unzip();
    if let Some(i) = s.iter().position(|v| !v.is_finite()) {
        return Err(MetricError::Undefined(format!("non-finite simulation at observed index {i}")));
    }
    Ok((o, s))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn need(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(MetricError::Undefined(format!("{what} needs at least {min} observed values, got {n}")));
    }
    Ok(())
}

/// Nash-Sutcliffe efficiency: `1 - sum((sim - obs)^2) / sum((obs - mean(obs))^2)`.
pub fn nse(obs: &[f64], sim: &[f64]) -> Result<f64> {
    let (o, s) = observed(obs, sim)?;
    need(o.len(), 2, "NSE")?;
    let mu = mean(&o);
    let denom: f64 = o.iter().map(|v| (v - mu) * (v - mu)).sum();
    if denom == 0.0 {
        return Err(MetricError::Undefined("NSE: observed series has zero variance".into()));
    }
    let num: f64 = o.iter().zip(&s).map(|(o, s)| (s - o) * (s - o)).sum();
    Ok(1.0 - num / denom)
}

/// Kling-Gupta efficiency `1 - sqrt((r-1)^2 + (alpha-1)^2 + (beta-1)^2)`.
pub fn kge(obs: &[f64], sim: &[f64]) -> Result<KgeComponents> {
    let (o, s) = observed(obs, sim)?;
    need(o.len(), 2, "KGE")?;
    let (mo, ms) = (mean(&o), mean(&s));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in o.iter().zip(&s) {
        sxy += (a - mo) * (b - ms);
        sxx += (a - mo) * (a - mo);
        syy += (b - ms) * (b - ms);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined("KGE: zero variance in observed or simulated series".into()));
    }
    if mo == 0.0 {
        return Err(MetricError::Undefined("KGE: observed mean is zero".into()));
    }
    let r = sxy / (sxx * syy).sqrt();
    let alpha = (syy / sxx).sqrt();
    let beta = ms / mo;
    let kge = 1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt();
    Ok(KgeComponents { kge, r, alpha, beta })
}

fn descending(mut x: Vec<f64>) -> Vec<f64> {
    x.sort_by(|a, b| b.total_cmp(a));
    x
}

fn check_frac(frac: f64, name: &str) -> Result<()> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(MetricError::Undefined(format!("{name} fraction must be in (0, 1], got {frac}")));
    }
    Ok(())
}

/// Number of flow-duration-curve entries in a segment of fraction `frac`.
fn segment_len(n: usize, frac: f64) -> usize {
    ((frac * n as f64).floor() as usize).max(1)
}

/// Percent bias of the highest `h_frac` of the flow-duration curves.
pub fn fhv(obs: &[f64], sim: &[f64], h_frac: f64) -> Result<f64> {
    check_frac(h_frac, "high-flow")?;
    let (o, s) = observed(obs, sim)?;
    need(o.len(), (1.0 / h_frac).ceil() as usize, "FHV")?;
    let k = segment_len(o.len(), h_frac);
    let (o, s) = (descending(o), descending(s));
    let so: f64 = o[..k].iter().sum();
    if so == 0.0 {
        return Err(MetricError::Undefined("FHV: high-flow observed volume is zero".into()));
    }
    let diff: f64 = o[..k].iter().zip(&s[..k]).map(|(o, s)| s - o).sum();
    Ok(100.0 * diff / so)
}

/// Log-space percent bias of the lowest `l_frac` of the flow-duration
/// curves, both series clamped below at `floor`.
pub fn flv(obs: &[f64], sim: &[f64], l_frac: f64, floor: f64) -> Result<f64> {
    check_frac(l_frac, "low-flow")?;
    if !(floor > 0.0) {
        return Err(MetricError::Undefined(format!("FLV floor must be > 0, got {floor}")));
    }
    let (o, s) = observed(obs, sim)?;
    need(o.len(), (1.0 / l_frac).ceil() as usize, "FLV")?;
    let k = segment_len(o.len(), l_frac);
    let log_tail = |x: Vec<f64>| -> Vec<f64> {
        let x = descending(x.into_iter().map(|v| v.max(floor)).collect());
        x[x.len() - k..].iter().map(|v| v.ln()).collect()
    };
    let (lo, ls) = (log_tail(o), log_tail(s));
    let (mo, ms) = (lo[k - 1], ls[k - 1]);
    let qo: f64 = lo.iter().map(|v| v - mo).sum();
    let qs: f64 = ls.iter().map(|v| v - ms).sum();
    if qo == 0.0 {
        return Err(MetricError::Undefined("FLV: observed low-flow segment is constant".into()));
    }
    Ok(-100.0 * (qs - qo) / qo)
}
