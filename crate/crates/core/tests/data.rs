use std::fs;

use chrono::NaiveDate;
use proptest::prelude::*;

use runoff::data::*;
use runoff::tensor::RngStream;

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn synth(n_basins: usize, n_days: usize, seed: u64) -> Vec<BasinRecord> {
    synth_linear_reservoir(n_basins, n_days, &SynthParams::default(), &RngStream::new(seed)).unwrap()
}

fn split_for(n_days: usize) -> SplitSpec {
    let start = SynthParams::default().start;
    let day = |i: usize| start + chrono::Days::new(i as u64);
    let n_test = n_days / 4;
    SplitSpec { test_start: day(0), test_end: day(n_test - 1), train_start: day(n_test), train_end: day(n_days - 1) }
}

#[test]
fn three_line_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let forcing = dir.path().join("f.csv");
    fs::write(&forcing, "date,prcp,tmax\n2001-03-01,1.5,10\n2001-03-02,0,11.25\n2001-03-03,4,9\n").unwrap();
    let flow = dir.path().join("q.csv");
    fs::write(&flow, "2001-03-01,35.3147\n2001-03-02,-999\n2001-03-03,0\n").unwrap();
    let attrs = dir.path().join("a.csv");
    fs::write(&attrs, "basin_id,area_km2,elev\nb1,86.4,120\n").unwrap();

    let table = parse_attributes(&attrs).unwrap();
    let row = table.get("b1").unwrap();
    let r = ingest_basin(row, &table.names, &flow, &[("daymet".to_string(), forcing.as_path())]).unwrap();
    assert_eq!(r.n_days(), 3);
    assert_eq!(r.start, d("2001-03-01"));
    assert_eq!(r.attributes, [120.0]);
    assert_eq!(r.forcing("daymet").unwrap().values, [1.5, 10.0, 0.0, 11.25, 4.0, 9.0]);
    // 35.3147 cfs = 1.0000 m3/s; over 86.4 km2 that is 1 mm/day.
    assert!((r.discharge[0] - 35.3147 * 0.3048f64.powi(3) * 86400.0 * 1000.0 / 86.4e6).abs() < 1e-12);
    assert!((r.discharge[0] - 1.0).abs() < 1e-4);
    assert!(r.discharge[1].is_nan());
    assert_eq!(r.discharge[2], 0.0);
}

#[test]
fn dimensional_analysis_of_one_cfs() {
    // ft -> m is 0.3048 exactly.
    let m3_per_s = 0.3048f64.powi(3);
    let mm_per_day = m3_per_s * 86_400.0 / 1e6 * 1e3;
    let got = cfs_to_mm_per_day(1.0, 1.0).unwrap();
    assert!((got - mm_per_day).abs() < 1e-6 * mm_per_day);
    assert!((got - 2.44657).abs() < 1e-5);
}

#[test]
fn population_moments() {
    let mut r = synth(1, 4, 1).remove(0);
    let blk = &mut r.forcings[0];
    blk.values = vec![1.0, 0.0, 3.0, 0.0, 100.0, 0.0, 100.0, 0.0];
    r.discharge = vec![1.0, 1.0, 7.0, 7.0];
    let split = SplitSpec {
        train_start: r.date(0),
        train_end: r.date(1),
        test_start: r.date(2),
        test_end: r.date(3),
    };
    let s = compute_norm_stats(&[r], &split).unwrap();
    assert_eq!((s.inputs[0].mean, s.inputs[0].std), (2.0, 1.0));
    assert_eq!(s.inputs[1].std, STD_FLOOR);
    assert_eq!(s.discharge.mean, 1.0);
}

#[test]
fn statistics_ignore_the_test_period() {
    let recs = synth(3, 400, 2);
    let split = split_for(400);
    let base = compute_norm_stats(&recs, &split).unwrap();

    let mut poisoned = recs.clone();
    for r in &mut poisoned {
        let (lo, hi) = r.span(split.test_start, split.test_end).unwrap();
        for day in lo..=hi {
            r.discharge[day] = 1e6;
            for b in &mut r.forcings {
                let n = b.n_vars();
                b.values[day * n..(day + 1) * n].fill(-5e5);
            }
        }
    }
    assert_eq!(compute_norm_stats(&poisoned, &split).unwrap(), base);

    let mut trimmed = recs;
    for r in &mut trimmed {
        let (lo, hi) = r.span(split.train_start, split.train_end).unwrap();
        r.restrict(lo, hi);
    }
    assert_eq!(compute_norm_stats(&trimmed, &split).unwrap(), base);
}

#[test]
fn fusing_a_noisy_copy() {
    let mut recs = synth(4, 60, 3);
    let clean_width = recs[0].input_dim();
    add_noisy_product(&mut recs, "synthetic", "noisy", 0.5, &RngStream::new(9)).unwrap();
    // Drop one basin's noisy product and shift another's dates.
    recs[1].forcings.pop();
    let late = recs[2].forcings.pop().unwrap();
    let mut shifted = ForcingBlock { values: late.values[10 * late.n_vars()..].to_vec(), ..late };
    shifted.values.truncate(40 * shifted.n_vars());
    let start = recs[2].date(10);
    recs[2].add_forcing(shifted, start).unwrap();

    let fused = fuse_forcings(recs, &["synthetic".into(), "noisy".into()]).unwrap();
    assert_eq!(fused.len(), 3);
    assert!(fused.iter().all(|r| r.basin_id != "synth_001"));
    for r in &fused {
        assert_eq!(r.n_forcing_vars(), 2 * r.forcings[0].n_vars());
        assert_eq!(r.input_dim(), clean_width + r.forcings[0].n_vars());
        for b in &r.forcings {
            assert_eq!(b.values.len(), r.n_days() * b.n_vars());
        }
    }
    let r2 = fused.iter().find(|r| r.basin_id == "synth_002").unwrap();
    assert_eq!(r2.start, SynthParams::default().start + chrono::Days::new(10));
    assert_eq!(r2.n_days(), 40);
}

#[test]
fn noisy_product_is_aligned_copy() {
    let mut recs = synth(2, 100, 4);
    let clean = recs.clone();
    add_noisy_product(&mut recs, "synthetic", "noisy", 0.0, &RngStream::new(1)).unwrap();
    for (r, c) in recs.iter().zip(&clean) {
        assert_eq!(r.forcing("noisy").unwrap().values, c.forcings[0].values);
        assert_eq!(r.discharge, c.discharge);
    }
}

#[test]
fn sampler_is_uniform_over_basins() {
    let recs = synth(4, 300, 5);
    let split = split_for(300);
    let stats = compute_norm_stats(&recs, &split).unwrap();
    let sampler = WindowSampler::new(&recs, &stats, &split, 10).unwrap();
    let mut rng = RngStream::new(6);
    let mut counts = [0usize; 4];
    let draws = 10_000;
    for _ in 0..draws / 100 {
        for (b, _) in sampler.sample(100, &mut rng, HeadMode::Seq2One).unwrap().picks {
            counts[b] += 1;
        }
    }
    let p = 0.25;
    let (mean, sd) = (draws as f64 * p, (draws as f64 * p * (1.0 - p)).sqrt());
    for c in counts {
        assert!((c as f64 - mean).abs() < 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn windows_stay_in_training_range() {
    let recs = synth(2, 200, 7);
    let split = split_for(200);
    let stats = compute_norm_stats(&recs, &split).unwrap();
    let sampler = WindowSampler::new(&recs, &stats, &split, 20).unwrap();
    let first_train = recs[0].index_of(split.train_start).unwrap();
    let mut rng = RngStream::new(1);
    let b = sampler.sample(500, &mut rng, HeadMode::Seq2Seq).unwrap();
    assert_eq!(b.x.dims(), [500, 20, 5]);
    assert_eq!(b.y.dims(), [500, 20, 1]);
    for &(_, end) in &b.picks {
        assert!(end + 1 >= first_train + 20);
    }
    assert!(WindowSampler::new(&recs, &stats, &split, 151).is_err());
}

#[test]
fn simulated_mass_balance() {
    let recs = synth(4, 2000, 8);
    for (i, r) in recs.iter().enumerate() {
        let precip: Vec<f64> = r.forcings[0].column(0).collect();
        let (k, et, s0) = (r.attributes[0], r.attributes[1], r.attributes[2]);
        let trace = simulate_reservoir(&precip, k, et, s0).unwrap();
        // With k + et < 1 the clamp never binds.
        assert!(k + et < 1.0);
        let p: f64 = precip.iter().sum();
        let q: f64 = trace.discharge.iter().sum();
        let e: f64 = trace.evaporation.iter().sum();
        let ds = trace.storage[precip.len()] - trace.storage[0];
        assert!((p - ds - q - e).abs() < 1e-8, "basin {i}: {}", p - ds - q - e);
    }
}

#[test]
fn resimulation_is_bit_identical() {
    let params = SynthParams::default();
    let recs = synth(3, 500, 10);
    let root = RngStream::new(10);
    for (i, r) in recs.iter().enumerate() {
        let mut rng = root.split(i as u64);
        let k = rng.uniform(params.k.0, params.k.1);
        let et = rng.uniform(params.et_rate.0, params.et_rate.1);
        let s0 = rng.uniform(params.s0.0, params.s0.1);
        let _area = rng.uniform(params.area_km2.0, params.area_km2.1);
        let mut s = s0;
        for day in 0..500 {
            let p = if rng.bernoulli(params.wet_prob) { rng.exponential(params.wet_mean) } else { 0.0 };
            assert_eq!(r.forcings[0].row(day)[0], p, "basin {i} day {day}");
            let q = k * s;
            assert_eq!(r.discharge[day], q, "basin {i} day {day}");
            s = (s + p - et * s - q).max(0.0);
        }
        assert_eq!(r.attributes, [k, et, s0]);
    }
    assert_eq!(synth(3, 500, 10), recs);
}

#[test]
fn dataset_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let layout = DataLayout::new(dir.path());
    let recs = synth(2, 90, 11);
    write_dataset(&layout, &recs).unwrap();
    let back = load_dataset(&layout, &["synthetic".into()]).unwrap();
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.forcings, b.forcings);
        assert_eq!(a.area_km2, b.area_km2);
        for (x, y) in a.discharge.iter().zip(&b.discharge) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn ingest_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("q.csv");
    fs::write(&p, "2001-01-01,1\n2001-01-02,-3\n").unwrap();
    let err = parse_streamflow(&p).unwrap_err().to_string();
    assert!(err.contains(":2"), "{err}");
    fs::write(&p, "2001-01-01,1\n2001-01-04,2\n").unwrap();
    assert!(parse_streamflow(&p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn batch_masks_exactly_the_missing_days(seed in 0u64..5000, holes in proptest::collection::vec(0usize..160, 0..40)) {
        let mut recs = synth(2, 160, seed);
        for &h in &holes {
            recs[h % 2].discharge[h] = f64::NAN;
            recs[(h + 1) % 2].forcings[0].values[h * 2] = f64::NAN;
        }
        let split = split_for(160);
        let Ok(stats) = compute_norm_stats(&recs, &split) else { return Ok(()) };
        let Ok(sampler) = WindowSampler::new(&recs, &stats, &split, 8) else { return Ok(()) };
        let mut rng = RngStream::new(seed);
        let b = sampler.sample(32, &mut rng, HeadMode::Seq2Seq).unwrap();
        prop_assert!(b.x.data().iter().all(|v| v.is_finite()));
        for (i, &(basin, end)) in b.picks.iter().enumerate() {
            let id = &sampler.basins()[basin].basin_id;
            let rec = recs.iter().find(|r| &r.basin_id == id).unwrap();
            for t in 0..8 {
                let day = end + 1 - 8 + t;
                let m = b.mask.data()[i * 8 + t];
                prop_assert_eq!(m == 0.0, rec.discharge[day].is_nan());
                if m == 0.0 {
                    prop_assert_eq!(b.y.data()[i * 8 + t], 0.0);
                }
            }
        }
    }

    #[test]
    fn standardize_round_trip(mean in -100.0f64..100.0, std in 1e-3f64..50.0, x in -1e3f64..1e3) {
        let s = VariableStats { name: "v".into(), mean, std };
        prop_assert!((s.destandardize(s.standardize(x)) - x).abs() < 1e-10 * x.abs().max(1.0));
    }

    #[test]
    fn unit_conversion_round_trip(q in 0.0f64..1e5, area in 0.1f64..1e5) {
        let mm = cfs_to_mm_per_day(q, area).unwrap();
        prop_assert!((mm_per_day_to_cfs(mm, area).unwrap() - q).abs() <= 1e-10 * q.max(1.0));
    }
}
