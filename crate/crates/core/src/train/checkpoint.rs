use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, TrainConfig, TrainError};
use crate::data::{NormalizationStats, SplitSpec};
use crate::models::{read_archive, write_archive, Model, ModelSpec, ModelWeights};

/// Layout revision of the checkpoint metadata block.
pub const CHECKPOINT_FORMAT: u32 = 1;

/// Everything needed to rerun evaluation: model, normalization statistics,
/// training configuration and split, seed and final iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub stats: NormalizationStats,
    pub config: TrainConfig,
    pub split: SplitSpec,
    pub seed: u64,
    pub iteration: u64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    format: u32,
    spec: ModelSpec,
    stats: NormalizationStats,
    config: TrainConfig,
    split: SplitSpec,
    seed: u64,
    iteration: u64,
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let meta = Meta {
            kind: "checkpoint".into(),
            format: CHECKPOINT_FORMAT,
            spec: self.model.spec().clone(),
            stats: self.stats.clone(),
            config: self.config.clone(),
            split: self.split,
            seed: self.seed,
            iteration: self.iteration,
        };
        let meta = serde_json::to_vec(&meta).map_err(|e| TrainError::Format(e.to_string()))?;
        write_archive(w, &meta, self.model.weights().iter())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Checkpoint> {
        let (meta, tensors) = read_archive(r)?;
        let meta: Meta = serde_json::from_slice(&meta).map_err(|e| TrainError::Format(e.to_string()))?;
        if meta.kind != "checkpoint" {
            return Err(TrainError::Format(format!("expected a checkpoint, found `{}`", meta.kind)));
        }
        if meta.format != CHECKPOINT_FORMAT {
            return Err(TrainError::Format(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_FORMAT})",
                meta.format
            )));
        }
        let model = Model::new(meta.spec, ModelWeights::from_named(tensors))?;
        Ok(Checkpoint {
            model,
            stats: meta.stats,
            config: meta.config,
            split: meta.split,
            seed: meta.seed,
            iteration: meta.iteration,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ckpt.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads the whole file before decoding so a failed load leaves no state.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    Checkpoint::read_from(&mut bytes.as_slice())
}
