use std::fmt;

use serde::{Deserialize, Serialize};

use super::hydro::{fhv, flv, kge, nse, KgeComponents, DEFAULT_HIGH_FRAC, DEFAULT_LOG_FLOOR, DEFAULT_LOW_FRAC};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nse,
    Kge,
    Fhv,
    Flv,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Nse, Metric::Kge, Metric::Fhv, Metric::Flv];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nse => "nse",
            Metric::Kge => "kge",
            Metric::Fhv => "fhv",
            Metric::Flv => "flv",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Nse => "NSE",
            Metric::Kge => "KGE",
            Metric::Fhv => "FHV",
            Metric::Flv => "FLV",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub high_frac: f64,
    pub low_frac: f64,
    pub log_floor: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { high_frac: DEFAULT_HIGH_FRAC, low_frac: DEFAULT_LOW_FRAC, log_floor: DEFAULT_LOG_FLOOR }
    }
}

/// Metrics of one basin; `None` marks an undefined metric, with the reason
/// in `notes`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinMetrics {
    pub basin_id: String,
    /// Days with a prediction and an observation.
    pub n_observed: usize,
    pub nse: Option<f64>,
    pub kge: Option<KgeComponents>,
    pub fhv: Option<f64>,
    pub flv: Option<f64>,
    pub notes: Vec<String>,
}

impl BasinMetrics {
    pub fn compute(basin_id: &str, obs: &[f64], sim: &[f64], opts: &MetricOptions) -> BasinMetrics {
        let mut notes = Vec::new();
        let mut keep = |r: Result<f64, super::MetricError>| r.map_err(|e| notes.push(e.to_string())).ok();
        let nse = keep(nse(obs, sim));
        let fhv = keep(fhv(obs, sim, opts.high_frac));
        let flv = keep(flv(obs, sim, opts.low_frac, opts.log_floor));
        let kge = kge(obs, sim).map_err(|e| notes.push(e.to_string())).ok();
        BasinMetrics {
            basin_id: basin_id.to_string(),
            n_observed: obs.iter().filter(|o| !o.is_nan()).count(),
            nse,
            kge,
            fhv,
            flv,
            notes,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Nse => self.nse,
            Metric::Kge => self.kge.map(|k| k.kge),
            Metric::Fhv => self.fhv,
            Metric::Flv => self.flv,
        }
    }
}

/// Median of the values; mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricReport {
    pub basins: Vec<BasinMetrics>,
}

impl MetricReport {
    pub fn values(&self, metric: Metric) -> Vec<Option<f64>> {
        self.basins.iter().map(|b| b.get(metric)).collect()
    }

    pub fn defined(&self, metric: Metric) -> Vec<f64> {
        self.basins.iter().filter_map(|b| b.get(metric)).collect()
    }

    /// Basins where `metric` is undefined.
    pub fn undefined(&self, metric: Metric) -> usize {
        self.basins.len() - self.defined(metric).len()
    }

    /// Median over the basins where `metric` is defined.
    pub fn median(&self, metric: Metric) -> Option<f64> {
        median(&self.defined(metric))
    }
}
