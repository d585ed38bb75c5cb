use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use runoff::data::{DataLayout, SplitSpec, SynthParams};
use runoff::metrics::MetricOptions;
use runoff::models::{ModelSpec, Variant};
use runoff::train::TrainConfig;

use super::CliError;

/// Environment variable naming the default data root.
pub const DATA_ROOT_ENV: &str = "RUNOFF_DATA_ROOT";

/// Run configuration file. Every section and key is optional; see the
/// README for the grammar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub parallel: bool,
    pub data: DataSection,
    pub split: SplitSpec,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub metrics: MetricOptions,
    pub synthetic: SyntheticSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub root: Option<PathBuf>,
    pub products: Vec<String>,
    pub manifest: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub streamflow_dir: Option<PathBuf>,
    pub forcing_root: Option<PathBuf>,
    pub forcing_dirs: BTreeMap<String, PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            root: None,
            products: vec!["synthetic".into()],
            manifest: None,
            attributes: None,
            streamflow_dir: None,
            forcing_root: None,
            forcing_dirs: BTreeMap::new(),
        }
    }
}

/// Architecture fields; `input_dim` comes from the data and `seq_len`
/// from `[train]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub hidden_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let s = ModelSpec::new(Variant::Lstm, 1);
        ModelSection {
            variant: s.variant,
            hidden_dim: s.hidden_dim,
            d_model: s.d_model,
            n_heads: s.n_heads,
            n_layers: s.n_layers,
            d_ff: s.d_ff,
            dropout: s.dropout,
        }
    }
}

impl ModelSection {
    pub fn spec(&self, input_dim: usize, seq_len: usize) -> ModelSpec {
        ModelSpec {
            variant: self.variant,
            input_dim,
            hidden_dim: self.hidden_dim,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            dropout: self.dropout,
            seq_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_basins: usize,
    pub n_days: usize,
    pub seed: u64,
    /// Adds a copy of the clean forcing with Gaussian noise under this name.
    pub noisy_product: Option<String>,
    pub noise_std: f64,
    pub reservoir: SynthParams,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            n_basins: 4,
            n_days: 4000,
            seed: 0,
            noisy_product: None,
            noise_std: 0.5,
            reservoir: SynthParams::default(),
        }
    }
}

/// A parsed config plus the directory relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
        let Some(path) = path else {
            return Ok(LoadedConfig { config: RunConfig::default(), base: PathBuf::from(".") });
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
        Ok(LoadedConfig { config, base })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// `data.root`, else `$RUNOFF_DATA_ROOT`, else the config directory.
    pub fn data_root(&self) -> PathBuf {
        match (&self.config.data.root, std::env::var_os(DATA_ROOT_ENV)) {
            (Some(r), _) => self.resolve(r),
            (None, Some(env)) if !env.is_empty() => PathBuf::from(env),
            _ => self.base.clone(),
        }
    }

    pub fn layout(&self) -> DataLayout {
        let root = self.data_root();
        let at = |p: &Option<PathBuf>| p.as_ref().map(|p| if p.is_absolute() { p.clone() } else { root.join(p) });
        let d = &self.config.data;
        let mut layout = DataLayout::new(&root);
        if let Some(p) = at(&d.manifest) {
            layout.manifest = p;
        }
        if let Some(p) = at(&d.attributes) {
            layout.attributes = p;
        }
        if let Some(p) = at(&d.streamflow_dir) {
            layout.streamflow_dir = p;
        }
        if let Some(p) = at(&d.forcing_root) {
            layout.forcing_root = p;
        }
        for (product, dir) in &d.forcing_dirs {
            layout.forcing_dirs.insert(product.clone(), at(&Some(dir.clone())).expect("present"));
        }
        layout
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.config.out) {
            (Some(f), _) => f.to_path_buf(),
            (None, Some(o)) => self.resolve(o),
            (None, None) => self.base.join("runs"),
        }
    }

    /// Checks the paths and dates a data-reading command depends on.
    pub fn validate_data(&self) -> Result<DataLayout, CliError> {
        self.config.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.config.data.products.is_empty() {
            return Err(CliError::Config("data.products is empty".into()));
        }
        let layout = self.layout();
        for (what, p) in [("basin manifest", &layout.manifest), ("attributes file", &layout.attributes)] {
            if !p.is_file() {
                return Err(CliError::Config(format!("{what} {} does not exist", p.display())));
            }
        }
        if !layout.streamflow_dir.is_dir() {
            return Err(CliError::Config(format!(
                "streamflow directory {} does not exist",
                layout.streamflow_dir.display()
            )));
        }
        for product in &self.config.data.products {
            let dir = layout.forcing_dir(product);
            if !dir.is_dir() {
                return Err(CliError::Config(format!("forcing directory {} for {product} does not exist", dir.display())));
            }
        }
        Ok(layout)
    }

    /// Explicit seeds, else the single `train.seed`.
    pub fn seeds(&self) -> Result<Vec<u64>, CliError> {
        let seeds = if self.config.seeds.is_empty() { vec![self.config.train.seed] } else { self.config.seeds.clone() };
        for (i, s) in seeds.iter().enumerate() {
            if seeds[..i].contains(s) {
                return Err(CliError::Config(format!("seed {s} listed twice")));
            }
        }
        Ok(seeds)
    }
}
