use std::fs;

use proptest::prelude::*;

use runoff::data::{synth_linear_reservoir, BasinRecord, SplitSpec, SynthParams};
use runoff::models::{Model, ModelSpec, ModelWeights, Variant};
use runoff::tensor::{RngStream, Tape, Tensor};
use runoff::train::*;

fn synth(n_basins: usize, n_days: usize, seed: u64) -> Vec<BasinRecord> {
    synth_linear_reservoir(n_basins, n_days, &SynthParams::default(), &RngStream::new(seed)).unwrap()
}

fn split_for(n_days: usize) -> SplitSpec {
    let start = SynthParams::default().start;
    let day = |i: usize| start + chrono::Days::new(i as u64);
    let n_test = n_days / 4;
    SplitSpec { test_start: day(0), test_end: day(n_test - 1), train_start: day(n_test), train_end: day(n_days - 1) }
}

fn small_spec(variant: Variant, input_dim: usize, seq_len: usize) -> ModelSpec {
    let mut s = ModelSpec::new(variant, input_dim);
    s.hidden_dim = 8;
    s.d_model = 8;
    s.n_heads = 2;
    s.n_layers = 1;
    s.d_ff = 16;
    s.dropout = 0.0;
    s.seq_len = seq_len;
    s
}

fn small_config(seq_len: usize, n_iterations: u64) -> TrainConfig {
    TrainConfig { learning_rate: 3e-3, batch_size: 8, n_iterations, seq_len, eval_every: 10, ..TrainConfig::default() }
}

fn checkpoint_bytes(c: &Checkpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    c.write_to(&mut buf).unwrap();
    buf
}

#[test]
fn masked_loss_matches_double_loop() {
    let (b, n) = (3, 5);
    let mut rng = RngStream::new(1);
    let yhat: Vec<f64> = (0..b * n).map(|_| rng.gaussian(0.0, 1.0)).collect();
    let y: Vec<f64> = (0..b * n).map(|_| rng.gaussian(0.0, 1.0)).collect();
    let mask: Vec<f64> = (0..b * n).map(|i| if i % 4 == 1 { 0.0 } else { 1.0 }).collect();
    let std = [0.5f64, 1.3, 0.02];
    let eps = 0.1;

    let (mut num, mut count) = (0.0, 0.0);
    for i in 0..b {
        for j in 0..n {
            let k = i * n + j;
            if mask[k] > 0.0 {
                num += (yhat[k] - y[k]).powi(2) / (std[i] + eps).powi(2);
                count += 1.0;
            }
        }
    }
    let tape = Tape::new();
    let yh = tape.constant(&Tensor::from_vec(&[b, n, 1], yhat).unwrap());
    let loss = basin_weighted_mse(
        &tape,
        yh,
        &Tensor::from_vec(&[b, n, 1], y).unwrap(),
        &Tensor::from_vec(&[b, n, 1], mask).unwrap(),
        &std,
        eps,
    )
    .unwrap();
    assert!((tape.value(loss).item().unwrap() - num / count).abs() < 1e-12);
}

#[test]
fn fully_masked_batch_is_an_error() {
    let tape = Tape::new();
    let yh = tape.constant(&Tensor::zeros(&[2, 1, 1]).unwrap());
    let y = Tensor::zeros(&[2, 1, 1]).unwrap();
    let mask = Tensor::zeros(&[2, 1, 1]).unwrap();
    assert!(basin_weighted_mse(&tape, yh, &y, &mask, &[1.0, 1.0], 0.1).is_err());
}

#[test]
fn adam_three_steps_on_a_parabola() {
    let mut weights = ModelWeights::from_named(vec![("theta".into(), Tensor::from_vec(&[1], vec![1.0]).unwrap().with_grad())]);
    let mut state = AdamState::new(&weights);
    let lr = 0.1;
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for t in 1..=3 {
        let g = 2.0 * theta;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);

        let p = weights.get_mut("theta").unwrap();
        let cur = p.data()[0];
        p.zero_grad();
        p.accumulate_grad(&[2.0 * cur]).unwrap();
        adam_step(&mut weights, &mut state, lr).unwrap();
        assert!((weights.get("theta").unwrap().data()[0] - theta).abs() < 1e-12);
    }
    // Each early step moves by about lr.
    assert!((theta - 0.7).abs() < 0.01);
}

#[test]
fn non_finite_gradient_leaves_weights_alone() {
    let mut weights = ModelWeights::from_named(vec![("w".into(), Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap().with_grad())]);
    let mut state = AdamState::new(&weights);
    weights.get_mut("w").unwrap().accumulate_grad(&[f64::NAN, 1.0]).unwrap();
    assert!(matches!(adam_step(&mut weights, &mut state, 0.1), Err(TrainError::NonFiniteGradient { .. })));
    assert_eq!(weights.get("w").unwrap().data(), [1.0, 2.0]);
    assert_eq!(state.t, 0);
}

#[test]
fn lstm_loss_falls() {
    let recs = synth(3, 400, 2);
    let spec = small_spec(Variant::Lstm, recs[0].input_dim(), 16);
    let out = train(&spec, &recs, &split_for(400), &small_config(16, 300)).unwrap();
    let first = out.trace[0].1;
    let tail: Vec<f64> = out.trace.iter().rev().take(5).map(|e| e.1).collect();
    let smoothed = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!(smoothed < 0.5 * first, "{first} -> {smoothed}");
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let recs = synth(2, 200, 3);
    let split = split_for(200);
    for variant in Variant::ALL {
        let spec = small_spec(variant, recs[0].input_dim(), 8);
        let cfg = small_config(8, 12);
        let a = train(&spec, &recs, &split, &cfg).unwrap();
        let b = train(&spec, &recs, &split, &cfg).unwrap();
        assert_eq!(checkpoint_bytes(&a.checkpoint), checkpoint_bytes(&b.checkpoint), "{variant}");
        assert_eq!(a.trace, b.trace);
        let c = train(&spec, &recs, &split, &TrainConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(checkpoint_bytes(&a.checkpoint), checkpoint_bytes(&c.checkpoint));
    }
}

#[test]
fn ensemble_is_the_same_serial_or_concurrent() {
    let recs = synth(2, 200, 4);
    let split = split_for(200);
    let spec = small_spec(Variant::TransformerModified, recs[0].input_dim(), 8);
    let cfg = small_config(8, 10);
    let seeds = [5, 1, 9];
    let serial = train_ensemble(&spec, &recs, &split, &cfg, &seeds, false).unwrap();
    let concurrent = train_ensemble(&spec, &recs, &split, &cfg, &seeds, true).unwrap();
    for ((s, c), &seed) in serial.iter().zip(&concurrent).zip(&seeds) {
        let (s, c) = (s.as_ref().unwrap(), c.as_ref().unwrap());
        assert_eq!(s.checkpoint.seed, seed);
        assert_eq!(checkpoint_bytes(&s.checkpoint), checkpoint_bytes(&c.checkpoint));
    }
    assert!(train_ensemble(&spec, &recs, &split, &cfg, &[1, 1], false).is_err());
    assert!(train_ensemble(&spec, &recs, &split, &cfg, &[], false).is_err());
}

#[test]
fn checkpoint_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let recs = synth(2, 200, 5);
    let spec = small_spec(Variant::Lstm, recs[0].input_dim(), 8);
    let ckpt = train(&spec, &recs, &split_for(200), &small_config(8, 5)).unwrap().checkpoint;
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&ckpt, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(checkpoint_bytes(&back), fs::read(&path).unwrap());

    let bytes = fs::read(&path).unwrap();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        fs::write(&path, &bytes[..cut]).unwrap();
        assert!(load_checkpoint(&path).is_err(), "truncated at {cut}");
    }
    let mut weights_only = Vec::new();
    ckpt.model.write_to(&mut weights_only).unwrap();
    fs::write(&path, &weights_only).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(TrainError::Format(_))));
}

#[test]
fn zero_iterations_returns_the_initial_model() {
    let recs = synth(2, 200, 6);
    let spec = small_spec(Variant::Lstm, recs[0].input_dim(), 8);
    let cfg = small_config(8, 0);
    let out = train(&spec, &recs, &split_for(200), &cfg).unwrap();
    assert!(out.trace.is_empty());
    assert_eq!(out.checkpoint.iteration, 0);
    let init = Model::init(spec, &mut RngStream::new(cfg.seed).split(0)).unwrap();
    assert_eq!(out.checkpoint.model.weights(), init.weights());
}

#[test]
fn config_and_data_mismatches_are_rejected() {
    let recs = synth(2, 200, 7);
    let split = split_for(200);
    let spec = small_spec(Variant::Lstm, recs[0].input_dim(), 8);
    assert!(train(&spec, &recs, &split, &small_config(9, 1)).is_err());
    let wide = small_spec(Variant::Lstm, recs[0].input_dim() + 1, 8);
    assert!(train(&wide, &recs, &split, &small_config(8, 1)).is_err());
    let bad = TrainConfig { learning_rate: -1.0, ..small_config(8, 1) };
    assert!(matches!(train(&spec, &recs, &split, &bad), Err(TrainError::Config(_))));
}

#[test]
fn huge_learning_rate_diverges() {
    let recs = synth(2, 200, 8);
    let spec = small_spec(Variant::Lstm, recs[0].input_dim(), 8);
    let cfg = TrainConfig { learning_rate: 1e300, clip_norm: 1e300, ..small_config(8, 50) };
    assert!(matches!(train(&spec, &recs, &split_for(200), &cfg), Err(TrainError::Divergence { .. })));
}

#[test]
fn overfits_a_tiny_problem() {
    let recs = synth(2, 500, 9);
    let spec = small_spec(Variant::Lstm, recs[0].input_dim(), 16);
    let cfg = TrainConfig { learning_rate: 1e-2, ..small_config(16, 600) };
    let out = train(&spec, &recs, &split_for(500), &cfg).unwrap();
    let last = out.trace.last().unwrap().1;
    assert!(last < 0.2 * out.trace[0].1, "{:?}", out.trace.last());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipping_bounds_the_norm(grads in proptest::collection::vec(-1e3f64..1e3, 1..20), max in 1e-3f64..10.0) {
        let mut weights = ModelWeights::from_named(vec![
            ("a".into(), Tensor::zeros(&[grads.len()]).unwrap().with_grad()),
            ("b".into(), Tensor::zeros(&[2]).unwrap().with_grad()),
        ]);
        weights.get_mut("a").unwrap().accumulate_grad(&grads).unwrap();
        weights.get_mut("b").unwrap().accumulate_grad(&[grads[0], -1.0]).unwrap();
        let before = global_grad_norm(&weights);
        let reported = clip_gradients(&mut weights, max);
        prop_assert_eq!(reported, before);
        let after = global_grad_norm(&weights);
        prop_assert!(after <= max + 1e-12);
        if before <= max {
            prop_assert_eq!(after, before);
        }
    }
}
