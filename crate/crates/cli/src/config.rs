//! TOML configuration file. Every key is optional and flags take
//! precedence; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, Result};

/// A scalar or a list, so `k = 2` and `k = [1, 2, 4]` both parse.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionsConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub validation: Option<f64>,
    pub test: Option<f64>,
    pub seed: Option<u64>,
    /// Per-dataset-tag fractions, e.g. a tag used only for training.
    #[serde(default)]
    pub datasets: BTreeMap<String, FractionsConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<String>,
    pub manifest: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub duration: Option<f64>,
    pub bpm_min: Option<u32>,
    pub bpm_max: Option<u32>,
    pub arch: Option<OneOrMany<String>>,
    pub k: Option<OneOrMany<usize>>,
    pub dropout: Option<OneOrMany<f64>>,
    pub runs: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub augment: Option<bool>,
    pub long_filter_len: Option<usize>,
    pub split: Option<SplitConfig>,
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<FileConfig> {
        toml::from_str(text).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            msg: e.message().to_string(),
        })
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = FileConfig::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.manifest, &mut config.cache_dir, &mut config.out, &mut config.weights]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}
