use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sfkt::data::DatasetOptions;
use sfkt::evaluator::DEFAULT_BUCKET_EDGES;
use sfkt::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Interaction CSV read by `prepare`.
    pub data: Option<PathBuf>,
    pub cache: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: None,
            cache: "cache".into(),
            checkpoints: "checkpoints".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Inclusive upper edges of the length buckets; the last bucket is open.
    pub bucket_edges: Vec<usize>,
    /// Largest practice count in the similarity export.
    pub similarity_max_count: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bucket_edges: DEFAULT_BUCKET_EDGES.to_vec(),
            similarity_max_count: 50,
        }
    }
}

/// Everything a run needs, as read from the TOML file and then overridden by
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Seeds to train and average over; empty means just `train.seed`.
    pub seeds: Vec<u64>,
    pub paths: Paths,
    pub data: DatasetOptions,
    pub eval: EvalConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.train.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Checks that do not need any file.
    pub fn validate(&self) -> Result<()> {
        if !self.eval.bucket_edges.windows(2).all(|w| w[0] < w[1]) {
            anyhow::bail!("bucket edges must be strictly increasing");
        }
        let d = &self.data;
        if !(d.train_frac > 0.0 && d.train_frac <= 1.0 && d.val_frac >= 0.0 && d.val_frac < 1.0) {
            anyhow::bail!("split fractions must satisfy 0 < train_frac <= 1 and 0 <= val_frac < 1");
        }
        let mut train = self.train;
        train.model.max_len = self.data.max_len;
        train.validate()?;
        Ok(())
    }
}
