/// Empirical CDF of one metric across basins.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfSeries {
    pub metric: String,
    /// Ascending.
    pub values: Vec<f64>,
    /// `(i - 0.5) / n` for 1-based rank `i`.
    pub levels: Vec<f64>,
    /// Undefined or non-finite entries left out.
    pub excluded: usize,
}

pub fn cdf_series(values: &[Option<f64>], metric: &str) -> CdfSeries {
    let mut v: Vec<f64> = values.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    let excluded = values.len() - v.len();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let levels = (1..=v.len()).map(|i| (i as f64 - 0.5) / n).collect();
    CdfSeries { metric: metric.to_string(), values: v, levels, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_values() {
        let c = cdf_series(&[Some(3.0), Some(1.0), None, Some(2.0)], "nse");
        assert_eq!(c.values, [1.0, 2.0, 3.0]);
        assert_eq!(c.levels, [1.0 / 6.0, 0.5, 5.0 / 6.0]);
        assert_eq!(c.excluded, 1);
    }

    #[test]
    fn single_value() {
        assert_eq!(cdf_series(&[Some(0.4)], "kge").levels, [0.5]);
    }
}
