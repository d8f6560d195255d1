use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pat_core::experiments::ExperimentConfig;
use pat_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::config_entries;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one run: resolved configuration, files read and written, timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<PathBuf>,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let versions = [
            ("pat-core".to_string(), pat_core::VERSION.to_string()),
            ("pat-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]
        .into_iter()
        .collect();
        Self {
            command: command.to_string(),
            config: config_entries(cfg),
            seed: cfg.seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions,
            wall_clock_seconds: 0.0,
            summary: BTreeMap::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.insert(key.to_string(), value.to_string());
    }

    /// Records the elapsed time, lists itself, and writes `manifest.json` into `out`.
    pub fn finish(mut self, out: &Path, started: Instant) -> Result<Self> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        self.outputs.push(MANIFEST_NAME.into());
        for f in &self.outputs[..self.outputs.len() - 1] {
            if !out.join(f).is_file() {
                return Err(Error::Validation(format!(
                    "declared output {} is missing",
                    f.display()
                )));
            }
        }
        let text = serde_json::to_string_pretty(&self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(out.join(MANIFEST_NAME), text + "\n")?;
        Ok(self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}
