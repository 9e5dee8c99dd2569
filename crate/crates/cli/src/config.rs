//! Settings shared by the subcommands.
//!
//! Values come from command-line flags first, then the TOML file given with
//! `--config`, then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Contents of a `--config` file. Every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub radius: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_matches: Option<usize>,
    pub max_paths: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub neighbors: Option<usize>,
    pub allow_duplicates: Option<bool>,
    pub quiet: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Resolved settings recorded in every output header.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub beta: Option<f64>,
    pub lambda: f64,
    pub radius: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_matches: usize,
    pub max_paths: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub neighbors: usize,
    pub allow_duplicates: bool,
}

fn positive(name: &str, v: Option<f64>) -> Result<(), UsageError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(UsageError(format!("--{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), UsageError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(UsageError(format!("--lambda must lie in [0, 1], got {}", self.lambda)));
        }
        positive("beta", self.beta)?;
        positive("radius", self.radius)?;
        positive("delta", self.delta)?;
        positive("epsilon", self.epsilon)?;
        if self.max_paths == 0 {
            return Err(UsageError("--max-paths must be positive".into()));
        }
        if self.neighbors == 0 {
            return Err(UsageError("--neighbors must be positive".into()));
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<&Path, UsageError> {
        self.manifest
            .as_deref()
            .ok_or_else(|| UsageError("a manifest is required (--manifest or `manifest` in the config file)".into()))
    }

    /// `explicit` if given, otherwise `default_name`; relative paths land in
    /// the output directory.
    pub fn output(&self, explicit: Option<&Path>, default_name: &str) -> PathBuf {
        let p = explicit.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(default_name));
        match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    }
}
