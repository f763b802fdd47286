use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use span_core::data::SyntheticSpec;
use span_core::train::TrainRunConfig;

/// Contents of a `--config` file.
#[derive(Debug, Default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub train: Option<TrainRunConfig>,
    /// Whether `[train]` names a regime (the struct default does not count).
    pub train_regime_set: bool,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    seed: Option<u64>,
    threads: Option<usize>,
    train: Option<toml::Table>,
    synthetic: Option<SyntheticSpec>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text)?;
        let train_regime_set = raw.train.as_ref().is_some_and(|t| t.contains_key("regime"));
        let train = raw
            .train
            .map(|t| toml::Value::Table(t).try_into::<TrainRunConfig>())
            .transpose()
            .context("in [train]")?;
        Ok(Self { seed: raw.seed, threads: raw.threads, train, train_regime_set, synthetic: raw.synthetic })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
