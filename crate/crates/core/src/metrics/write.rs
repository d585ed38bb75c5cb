use std::io::{self, Write};

use super::cdf::CdfSeries;
use super::ensemble::EnsembleSummary;
use super::report::{Metric, MetricReport};

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

/// `basin_id,nse,kge,r,alpha,beta,fhv,flv` rows, then `#` summary lines
/// with basin medians and undefined counts. Undefined values print as `NaN`.
pub fn write_report_csv(report: &MetricReport, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "basin_id,nse,kge,r,alpha,beta,fhv,flv")?;
    for b in &report.basins {
        let k = b.kge;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            b.basin_id,
            num(b.nse),
            num(k.map(|k| k.kge)),
            num(k.map(|k| k.r)),
            num(k.map(|k| k.alpha)),
            num(k.map(|k| k.beta)),
            num(b.fhv),
            num(b.flv)
        )?;
    }
    let medians: Vec<String> = Metric::ALL.iter().map(|&m| format!("{}={}", m.name(), num(report.median(m)))).collect();
    let undefined: Vec<String> = Metric::ALL.iter().map(|&m| format!("{}={}", m.name(), report.undefined(m))).collect();
    writeln!(w, "# basins,{}", report.basins.len())?;
    writeln!(w, "# median,{}", medians.join(","))?;
    writeln!(w, "# undefined,{}", undefined.join(","))?;
    Ok(())
}

pub fn write_cdf_csv(series: &CdfSeries, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "value,cdf_level")?;
    for (v, l) in series.values.iter().zip(&series.levels) {
        writeln!(w, "{v},{l}")?;
    }
    Ok(())
}

/// Table-style text: one `metric: mean ± std` line per metric.
pub fn write_summary_table(summary: &EnsembleSummary, label: &str, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "{label} ({} member{})", summary.members, if summary.members == 1 { "" } else { "s" })?;
    for agg in &summary.metrics {
        let cell = match (agg.mean, agg.std) {
            (Some(m), Some(s)) => format!("{:.4} ± {:.4}", unsigned_zero(m), unsigned_zero(s)),
            _ => "undefined".to_string(),
        };
        let flag = if agg.degenerate && agg.mean.is_some() { "  [std degenerate: single member]" } else { "" };
        writeln!(w, "  {:<4} {cell}{flag}", format!("{}:", agg.metric.label()))?;
    }
    Ok(())
}

/// Values that print as zero at four places print without a sign.
fn unsigned_zero(v: f64) -> f64 {
    if v.abs() < 5e-5 {
        0.0
    } else {
        v
    }
}

/// Full-precision summary: `metric,mean,std,n_members,degenerate,member_medians`
/// with member medians separated by `;`.
pub fn write_summary_csv(summary: &EnsembleSummary, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "metric,mean,std,n_members,degenerate,member_medians")?;
    for agg in &summary.metrics {
        let medians: Vec<String> = agg.member_medians.iter().map(|m| num(*m)).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            agg.metric.name(),
            num(agg.mean),
            num(agg.std),
            agg.n_defined(),
            agg.degenerate,
            medians.join(";")
        )?;
    }
    Ok(())
}
