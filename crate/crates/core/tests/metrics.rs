use proptest::prelude::*;

use runoff::metrics::*;
use runoff::tensor::RngStream;

mod support;
use support::*;

#[test]
fn fifty_seeded_pairs_match_references() {
    for seed in 0..50 {
        let (o, s) = pair(seed, 1000);
        assert!((nse(&o, &s).unwrap() - ref_nse(&o, &s)).abs() < 1e-10, "nse seed {seed}");
        let k = kge(&o, &s).unwrap();
        let (rk, rr, ra, rb) = ref_kge(&o, &s);
        for (got, want) in [(k.kge, rk), (k.r, rr), (k.alpha, ra), (k.beta, rb)] {
            assert!((got - want).abs() < 1e-10, "kge seed {seed}: {got} vs {want}");
        }
        assert!((fhv(&o, &s, 0.02).unwrap() - ref_fhv(&o, &s, 0.02)).abs() < 1e-10, "fhv seed {seed}");
        assert!((flv(&o, &s, 0.3, 1e-6).unwrap() - ref_flv(&o, &s, 0.3, 1e-6)).abs() < 1e-10, "flv seed {seed}");
    }
}

#[test]
fn flv_floor_with_zero_flows() {
    let (mut o, mut s) = pair(77, 1000);
    for i in (0..1000).step_by(9) {
        o[i] = 0.0;
    }
    for i in (0..1000).step_by(13) {
        s[i] = 0.0;
    }
    let got = flv(&o, &s, 0.3, 1e-6).unwrap();
    assert!((got - ref_flv(&o, &s, 0.3, 1e-6)).abs() < 1e-10);
    assert!(got.is_finite());
}

#[test]
fn closed_forms() {
    let (o, _) = pair(5, 1000);
    assert_eq!(nse(&o, &o).unwrap(), 1.0);
    assert_eq!(kge(&o, &o).unwrap().kge, 1.0);
    assert_eq!(fhv(&o, &o, 0.02).unwrap(), 0.0);
    assert_eq!(flv(&o, &o, 0.3, 1e-6).unwrap(), 0.0);

    let double: Vec<f64> = o.iter().map(|v| 2.0 * v).collect();
    assert!((kge(&o, &double).unwrap().kge - (1.0 - 2f64.sqrt())).abs() < 1e-12);

    let up: Vec<f64> = o.iter().map(|v| 1.1 * v).collect();
    assert!((fhv(&o, &up, 0.02).unwrap() - 10.0).abs() < 1e-10);
    for c in [0.3, 1.7, 12.0] {
        let scaled: Vec<f64> = o.iter().map(|v| c * v).collect();
        assert!(flv(&o, &scaled, 0.3, 1e-9).unwrap().abs() < 1e-10, "c = {c}");
    }
}

#[test]
fn climatology_scores_zero() {
    let (o, _) = pair(8, 300);
    let m = o.iter().sum::<f64>() / o.len() as f64;
    assert!(nse(&o, &vec![m; o.len()]).unwrap().abs() < 1e-12);
}

#[test]
fn kge_affine_grid() {
    let (o, _) = pair(9, 400);
    let n = o.len() as f64;
    let mo = o.iter().sum::<f64>() / n;
    for a in [0.5, 1.0, 1.5, 3.0] {
        for b in [-0.2, 0.0, 0.4] {
            let s: Vec<f64> = o.iter().map(|v| a * v + b * mo).collect();
            let k = kge(&o, &s).unwrap();
            assert!((k.r - 1.0).abs() < 1e-12);
            assert!((k.alpha - a).abs() < 1e-12, "alpha {a} {b}");
            assert!((k.beta - (a + b)).abs() < 1e-12, "beta {a} {b}");
        }
    }
}

#[test]
fn median_of_stub_basins() {
    let report = MetricReport {
        basins: [0.3, 0.9, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &v)| BasinMetrics {
                basin_id: format!("b{i}"),
                n_observed: 10,
                nse: Some(v),
                kge: None,
                fhv: Some(-v),
                flv: None,
                notes: vec![],
            })
            .collect(),
    };
    assert_eq!(report.median(Metric::Nse), Some(0.6));
    assert_eq!(report.median(Metric::Fhv), Some(-0.6));
    assert_eq!(report.median(Metric::Kge), None);
    assert_eq!(report.undefined(Metric::Flv), 3);
}

fn stub_report(nse: &[f64], kge_v: &[f64]) -> MetricReport {
    MetricReport {
        basins: nse
            .iter()
            .zip(kge_v)
            .enumerate()
            .map(|(i, (&n, &k))| BasinMetrics {
                basin_id: format!("b{i}"),
                n_observed: 100,
                nse: Some(n),
                kge: Some(KgeComponents { kge: k, r: 1.0, alpha: 1.0, beta: 1.0 }),
                fhv: Some(n * 10.0),
                flv: Some(k - 1.0),
                notes: vec![],
            })
            .collect(),
    }
}

#[test]
fn ten_members_against_spreadsheet() {
    let mut rng = RngStream::new(31);
    let mut reports = Vec::new();
    let mut medians = Vec::new();
    for _ in 0..10 {
        let n: Vec<f64> = (0..5).map(|_| rng.uniform(0.2, 0.9)).collect();
        let k: Vec<f64> = (0..5).map(|_| rng.uniform(0.1, 0.8)).collect();
        // Odd basin count: the median is the third order statistic.
        medians.push(ascending(&n)[2]);
        reports.push(stub_report(&n, &k));
    }
    let summary = summarize_ensemble(&reports).unwrap();
    let mean = medians.iter().sum::<f64>() / 10.0;
    let var = medians.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 9.0;
    let agg = summary.get(Metric::Nse);
    assert!((agg.mean.unwrap() - mean).abs() < 1e-12);
    assert!((agg.std.unwrap() - var.sqrt()).abs() < 1e-12);
    assert!(!agg.degenerate);
    assert_eq!(summary.members, 10);
}

#[test]
fn identical_reports_have_zero_std() {
    let r = stub_report(&[0.5, 0.7, 0.1], &[0.3, 0.2, 0.4]);
    let s = summarize_ensemble(&[r.clone(), r.clone(), r]).unwrap();
    for m in Metric::ALL {
        assert!(s.get(m).std.unwrap().abs() < 1e-12);
    }
}

#[test]
fn cdf_at_median_is_one_half() {
    let mut rng = RngStream::new(12);
    let values: Vec<Option<f64>> = (0..100).map(|_| Some(rng.gaussian(0.0, 1.0))).collect();
    let c = cdf_series(&values, "nse");
    let med = median(&c.values).unwrap();
    let below = c.values.iter().filter(|&&v| v <= med).count();
    let level = c.levels[below - 1];
    assert!((level - 0.5).abs() <= 1.0 / 100.0, "{level}");
    assert!(c.levels.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn prediction_mean_averages_members() {
    let a = BasinSimulation { basin_id: "x".into(), start: None, obs: vec![1.0, 2.0], sim: vec![1.0, 3.0] };
    let b = BasinSimulation { sim: vec![3.0, 1.0], ..a.clone() };
    let m = prediction_mean(&[vec![a], vec![b]]).unwrap();
    assert_eq!(m[0].sim, [2.0, 2.0]);
    assert_eq!(m[0].obs, [1.0, 2.0]);
}

#[test]
fn report_csv_layout() {
    let mut buf = Vec::new();
    write_report_csv(&stub_report(&[0.5, 0.7], &[0.3, 0.2]), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "basin_id,nse,kge,r,alpha,beta,fhv,flv");
    assert!(lines[1].starts_with("b0,0.5,0.3,1,1,1,5,"));
    assert_eq!(lines[3], "# basins,2");
    assert!(lines[4].starts_with("# median,nse=0.6,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paired_permutation_leaves_all_metrics(seed in 0u64..10_000, n in 50usize..200) {
        let (o, s) = pair(seed, n);
        let mut rng = RngStream::new(seed ^ 0xabc);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.index(i + 1));
        }
        let po: Vec<f64> = idx.iter().map(|&i| o[i]).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
        prop_assert!((nse(&o, &s).unwrap() - nse(&po, &ps).unwrap()).abs() < 1e-10);
        prop_assert!((kge(&o, &s).unwrap().kge - kge(&po, &ps).unwrap().kge).abs() < 1e-10);
    }

    #[test]
    fn fdc_metrics_ignore_independent_permutations(seed in 0u64..10_000, n in 50usize..200) {
        let (o, s) = pair(seed, n);
        let mut rng = RngStream::new(seed + 1);
        let mut s2 = s.clone();
        for i in (1..n).rev() {
            s2.swap(i, rng.index(i + 1));
        }
        let mut o2 = o.clone();
        o2.reverse();
        prop_assert_eq!(fhv(&o, &s, 0.02).unwrap(), fhv(&o2, &s2, 0.02).unwrap());
        prop_assert_eq!(flv(&o, &s, 0.3, 1e-6).unwrap(), flv(&o2, &s2, 0.3, 1e-6).unwrap());
    }

    #[test]
    fn fhv_proportional_response(seed in 0u64..10_000, c in 0.2f64..5.0) {
        let (o, _) = pair(seed, 100);
        let s: Vec<f64> = o.iter().map(|v| c * v).collect();
        prop_assert!((fhv(&o, &s, 0.02).unwrap() - 100.0 * (c - 1.0)).abs() < 1e-9);
    }
}
