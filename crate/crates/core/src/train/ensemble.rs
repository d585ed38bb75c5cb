use super::trainer::{train, TrainOutcome};
use super::{Result, TrainConfig, TrainError};
use crate::data::{BasinRecord, SplitSpec};
use crate::models::ModelSpec;

/// One independent [`train`] run per seed, in seed order. With
/// `concurrent`, members run on scoped threads; results are identical
/// either way. A failing member does not stop its siblings.
pub fn train_ensemble(
    spec: &ModelSpec,
    records: &[BasinRecord],
    split: &SplitSpec,
    config: &TrainConfig,
    seeds: &[u64],
    concurrent: bool,
) -> Result<Vec<Result<TrainOutcome>>> {
    if seeds.is_empty() {
        return Err(TrainError::Config("ensemble needs at least one seed".into()));
    }
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(TrainError::Config(format!("seed {s} listed twice")));
        }
    }
    let member = |seed: u64| train(spec, records, split, &TrainConfig { seed, ..config.clone() });
    if !concurrent || seeds.len() == 1 {
        return Ok(seeds.iter().map(|&s| member(s)).collect());
    }
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || member(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(TrainError::Config("ensemble member panicked".into()))))
            .collect()
    }))
}
