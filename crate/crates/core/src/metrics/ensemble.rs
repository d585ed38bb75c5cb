use super::evaluate::BasinSimulation;
use super::report::{Metric, MetricReport};
use super::{MetricError, Result};

/// One metric across ensemble members.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAggregate {
    pub metric: Metric,
    /// Basin median of each member, `None` where no basin was defined.
    pub member_medians: Vec<Option<f64>>,
    /// Mean over the defined member medians.
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1); 0 for a single member.
    pub std: Option<f64>,
    /// Set when fewer than two members contribute, so `std` carries no spread.
    pub degenerate: bool,
}

impl MetricAggregate {
    pub fn n_defined(&self) -> usize {
        self.member_medians.iter().flatten().count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub members: usize,
    pub metrics: Vec<MetricAggregate>,
}

impl EnsembleSummary {
    pub fn get(&self, metric: Metric) -> &MetricAggregate {
        self.metrics.iter().find(|m| m.metric == metric).expect("every metric is summarized")
    }
}

/// Mean and sample std of the members' basin-median metrics.
pub fn summarize_ensemble(reports: &[MetricReport]) -> Result<EnsembleSummary> {
    if reports.is_empty() {
        return Err(MetricError::Evaluation("ensemble summary needs at least one report".into()));
    }
    let metrics = Metric::ALL
        .iter()
        .map(|&metric| {
            let member_medians: Vec<Option<f64>> = reports.iter().map(|r| r.median(metric)).collect();
            let defined: Vec<f64> = member_medians.iter().flatten().copied().collect();
            let n = defined.len();
            let mean = (n > 0).then(|| defined.iter().sum::<f64>() / n as f64);
            let std = mean.map(|m| {
                if n < 2 {
                    0.0
                } else {
                    (defined.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
            });
            MetricAggregate { metric, member_medians, mean, std, degenerate: n < 2 }
        })
        .collect();
    Ok(EnsembleSummary { members: reports.len(), metrics })
}

/// Per-day mean of the members' simulated discharge. Members must cover
/// the same basins and days.
pub fn prediction_mean(members: &[Vec<BasinSimulation>]) -> Result<Vec<BasinSimulation>> {
    let first = members.first().ok_or_else(|| MetricError::Evaluation("no ensemble members".into()))?;
    let mut out = first.clone();
    for member in &members[1..] {
        if member.len() != out.len() {
            return Err(MetricError::Evaluation("ensemble members cover different basins".into()));
        }
        for (acc, sim) in out.iter_mut().zip(member) {
            if acc.basin_id != sim.basin_id || acc.start != sim.start || acc.sim.len() != sim.sim.len() {
                return Err(MetricError::Evaluation(format!(
                    "ensemble members disagree on the days of basin {}",
                    acc.basin_id
                )));
            }
            acc.sim.iter_mut().zip(&sim.sim).for_each(|(a, b)| *a += b);
        }
    }
    let n = members.len() as f64;
    for s in &mut out {
        s.sim.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::BasinMetrics;

    fn report(nse: f64) -> MetricReport {
        MetricReport {
            basins: vec![BasinMetrics {
                basin_id: "a".into(),
                n_observed: 10,
                nse: Some(nse),
                kge: None,
                fhv: Some(1.0),
                flv: None,
                notes: vec![],
            }],
        }
    }

    #[test]
    fn two_members() {
        let s = summarize_ensemble(&[report(0.7), report(0.8)]).unwrap();
        let nse = s.get(Metric::Nse);
        assert!((nse.mean.unwrap() - 0.75).abs() < 1e-15);
        assert!((nse.std.unwrap() - 0.0707106781).abs() < 1e-9);
        assert!(!nse.degenerate);
        assert_eq!(s.get(Metric::Kge).mean, None);
        assert_eq!(s.get(Metric::Fhv).std, Some(0.0));
    }

    #[test]
    fn single_member_is_degenerate() {
        let s = summarize_ensemble(&[report(0.6)]).unwrap();
        let nse = s.get(Metric::Nse);
        assert_eq!((nse.mean, nse.std, nse.degenerate), (Some(0.6), Some(0.0), true));
        assert!(summarize_ensemble(&[]).is_err());
    }
}
