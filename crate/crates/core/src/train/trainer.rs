use super::checkpoint::Checkpoint;
use super::loss::masked_loss;
use super::optim::{adam_step, clip_gradients, AdamState};
use super::{Result, TrainConfig, TrainError};
use crate::data::{compute_norm_stats, BasinRecord, HeadMode, SplitSpec, WindowSampler};
use crate::models::{Model, ModelSpec};
use crate::tensor::{RngStream, Tape};

/// Stream ids split off the run seed.
const INIT_STREAM: u64 = 0;
const SAMPLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Batches drawn before giving up on finding an observed target.
const MAX_RESAMPLES: usize = 1000;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// `(iteration, mean batch loss since the previous entry)`, one entry
    /// every `eval_every` iterations and one for a trailing partial period.
    pub trace: Vec<(u64, f64)>,
}

pub fn train(spec: &ModelSpec, records: &[BasinRecord], split: &SplitSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(spec, records, split, config, |_, _| {})
}

/// [`train`], calling `observe(iteration, loss)` for every trace entry.
pub fn train_observed(
    spec: &ModelSpec,
    records: &[BasinRecord],
    split: &SplitSpec,
    config: &TrainConfig,
    mut observe: impl FnMut(u64, f64),
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    if config.seq_len != spec.seq_len {
        return Err(TrainError::Config(format!(
            "config seq_len {} differs from model seq_len {}",
            config.seq_len, spec.seq_len
        )));
    }
    let head = config.resolve_head(spec.variant)?;
    let stats = compute_norm_stats(records, split)?;
    if stats.input_dim() != spec.input_dim {
        return Err(TrainError::Config(format!(
            "data has {} input features, model expects {}",
            stats.input_dim(),
            spec.input_dim
        )));
    }
    let sampler = WindowSampler::new(records, &stats, split, config.seq_len)?;

    let root = RngStream::new(config.seed);
    let mut model = Model::init(spec.clone(), &mut root.split(INIT_STREAM))?;
    let mut sample_rng = root.split(SAMPLE_STREAM);
    let mut dropout_rng = root.split(DROPOUT_STREAM);
    let mut adam = AdamState::new(model.weights());

    let mut trace = Vec::new();
    let (mut period_sum, mut period_n) = (0.0, 0u64);
    for iteration in 1..=config.n_iterations {
        let mut batch = sampler.sample(config.batch_size, &mut sample_rng, head)?;
        let mut tries = 1;
        while batch.observed() == 0 {
            if tries == MAX_RESAMPLES {
                return Err(TrainError::Loss(format!("{MAX_RESAMPLES} consecutive batches without observed targets")));
            }
            batch = sampler.sample(config.batch_size, &mut sample_rng, head)?;
            tries += 1;
        }

        let tape = Tape::new();
        let x = tape.constant(&batch.x);
        let (yhat, params) = model.forward(&tape, x, Some(&mut dropout_rng))?;
        let yhat = match head {
            HeadMode::Seq2One if spec.variant.is_sequence_output() => {
                tape.slice(yhat, 1, config.seq_len - 1..config.seq_len)?
            }
            _ => yhat,
        };
        let loss = masked_loss(&tape, yhat, &batch.y, &batch.mask, &batch.basin_std, config.loss, config.loss_eps)?;
        let loss_value = tape.value(loss).item()?;
        if !loss_value.is_finite() {
            return Err(TrainError::Divergence { iteration, loss: loss_value });
        }
        let vars = params.vars().to_vec();
        drop(params);
        let grads = tape.backward(loss)?;

        let weights = model.weights_mut();
        weights.zero_grad();
        for (var, (_, t)) in vars.into_iter().zip(weights.iter_mut()) {
            grads.accumulate_into(var, t)?;
        }
        clip_gradients(weights, config.clip_norm);
        adam_step(weights, &mut adam, config.learning_rate).map_err(|e| match e {
            TrainError::NonFiniteGradient { .. } => TrainError::Divergence { iteration, loss: loss_value },
            e => e,
        })?;

        period_sum += loss_value;
        period_n += 1;
        if iteration % config.eval_every == 0 || iteration == config.n_iterations {
            let mean = period_sum / period_n as f64;
            observe(iteration, mean);
            trace.push((iteration, mean));
            (period_sum, period_n) = (0.0, 0);
        }
    }

    model.weights_mut().zero_grad();
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            stats,
            config: config.clone(),
            split: *split,
            seed: config.seed,
            iteration: config.n_iterations,
        },
        trace,
    })
}
