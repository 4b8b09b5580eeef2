//! Run configuration files.
//!
//! A TOML document with `[model]`, `[train]` and `[io]` tables plus an
//! optional top-level `threads` key. Unknown keys are rejected and both
//! seeds are mandatory. Errors name the file and the offending line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::train::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    /// Target image for `fit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Samples per axis for render, decompose, spectrum and scalespace. The
    /// input resolution when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// Steps between intermediate checkpoints; only the final one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            input: None,
            out_dir: default_out(),
            resolution: None,
            checkpoint_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for data-parallel loops; the machine default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub io: IoConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        crate::tiling::Tiling::build(&self.model.tiling)?;
        self.model.parameter_count()?;
        self.train.validate()?;
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        if self.io.checkpoint_every == Some(0) {
            return Err(Error::InvalidArgument("checkpoint_every must be at least 1".into()));
        }
        if let Some(r) = self.io.resolution {
            if r < 8 || !r.is_power_of_two() {
                return Err(Error::InvalidGrid(format!("resolution {r} is not a power of two >= 8")));
            }
        }
        Ok(())
    }

    /// Sets both the model and the training seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.model.tiling.seed = seed;
        self.train.seed = seed;
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Parses and validates `text`; `path` only labels errors.
pub fn parse_config_str(text: &str, path: &Path) -> Result<RunConfig> {
    let fail = |message: String| Error::Config {
        path: path.to_path_buf(),
        message,
    };
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        let msg = e.message().trim().to_string();
        fail(match line {
            Some(l) => format!("line {l}: {msg}"),
            None => msg,
        })
    })?;
    cfg.validate().map_err(|e| {
        let msg = e.to_string();
        match anchor(text, &msg) {
            Some(l) => fail(format!("line {l}: {msg}")),
            None => fail(msg),
        }
    })?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, path)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first key named in a validation message.
fn anchor(text: &str, msg: &str) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, line) in text.lines().enumerate() {
        let key = line.split('=').next().unwrap_or("").trim();
        if key.is_empty() || line.trim_start().starts_with('#') || !line.contains('=') {
            continue;
        }
        if let Some(pos) = msg.find(key) {
            if best.is_none_or(|(p, _)| pos < p) {
                best = Some((pos, i + 1));
            }
        }
    }
    best.map(|(_, l)| l)
}
