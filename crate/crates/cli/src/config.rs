//! Run configuration: built-in defaults, then a JSON file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use graphcond::condense::BilevelConfig;
use graphcond::diagnostics::BoundCheckConfig;
use graphcond::{CondenseConfig, EvalConfig, Method};
use serde::{Deserialize, Serialize};

/// Graphs per class in the built-in toy dataset.
pub const TOY_PER_CLASS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// TU dataset name, looked up as `<data_dir>/<dataset>/`.
    pub dataset: Option<String>,
    pub data_dir: Option<PathBuf>,
    /// Use the built-in triangle/path dataset instead of a TU dataset.
    pub toy: bool,
    /// Seed of the train/validation/test split.
    pub split_seed: u64,
    pub method: Method,
    /// Use nested trajectory matching instead of one-step matching.
    pub bilevel: bool,
    pub condense: CondenseConfig,
    pub nested: BilevelConfig,
    pub eval: EvalConfig,
    pub bounds: BoundCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            data_dir: None,
            toy: false,
            split_seed: 0,
            method: Method::Doscond,
            bilevel: false,
            condense: CondenseConfig::default(),
            nested: BilevelConfig::default(),
            eval: EvalConfig::default(),
            bounds: BoundCheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(graphcond::Error::from)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.toy && self.dataset.is_none() {
            bail!(graphcond::Error::InvalidArgument("pass --dataset NAME or --toy".into()));
        }
        self.condense.validate()?;
        self.eval.validate()?;
        self.bounds.validate()?;
        if self.bilevel && (self.nested.inner_steps == 0 || self.nested.outer_steps == 0) {
            bail!(graphcond::Error::InvalidArgument(
                "inner and outer steps must be at least 1".into()
            ));
        }
        Ok(())
    }

    /// Directory holding the TU files of the configured dataset.
    pub fn dataset_dir(&self) -> Option<PathBuf> {
        let name = self.dataset.as_ref()?;
        let root = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os("DOSCOND_DATA_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        Some(root.join(name))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
