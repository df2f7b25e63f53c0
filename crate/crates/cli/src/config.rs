//! Run configuration: one TOML document per training run.

use std::path::{Path, PathBuf};

use gphlvm::gplvm::TrainConfig;
use serde::Deserialize;

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GPHLVM_OUT_DIR";

/// Configuration shipped with `gen-data`, pointing at the files it writes.
pub const SYNTHETIC_TREE_CONFIG: &str = include_str!("../configs/synthetic_tree.toml");

/// Paths plus every training hyperparameter.
///
/// Relative paths resolve against the directory holding the config file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: PathBuf,
    pub dataset: PathBuf,
    /// Model file; defaults to `model.json` in the output directory.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Directory for reports and plots.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(source: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(source).map_err(|e| CliError::Config(one_line(&e.to_string())))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and resolves the referenced paths relative to it.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let source = crate::error::read(path)?;
        let mut cfg = Self::parse(&source)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.graph = base.join(&cfg.graph);
        cfg.dataset = base.join(&cfg.dataset);
        cfg.model = cfg.model.map(|m| base.join(m));
        cfg.out_dir = cfg.out_dir.map(|d| base.join(d));
        Ok(cfg)
    }

    /// Output directory: command-line flag, then config, then environment, then `.`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf).or_else(|| self.out_dir.clone()).unwrap_or_else(default_out_dir)
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
