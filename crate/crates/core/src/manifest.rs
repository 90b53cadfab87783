//! Provenance record written next to every training run.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{text_digest, RunConfig};
use crate::error::{Error, Result};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical configuration text.
    pub config_digest: String,
    /// Canonical text of the resolved configuration.
    pub config: String,
    pub seed: u64,
    /// Artifact role (`checkpoint`, `log`, ...) to file name, relative to
    /// the manifest's directory.
    pub artifacts: BTreeMap<String, String>,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, started_at: f64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_digest: config.digest(),
            config: config.canonical_text(),
            seed: config.train.seed,
            artifacts: BTreeMap::new(),
            code_version: CODE_VERSION.to_string(),
            started_at,
            finished_at: started_at,
        }
    }

    pub fn add_artifact(&mut self, role: &str, file_name: &str) {
        self.artifacts.insert(role.to_string(), file_name.to_string());
    }

    /// Whether the stored configuration still hashes to the recorded digest.
    pub fn verify(&self) -> Result<bool> {
        self.verify_config_text(&self.config)
    }

    /// Whether `config_text` hashes to the recorded digest after
    /// normalization.
    pub fn verify_config_text(&self, config_text: &str) -> Result<bool> {
        let parsed = RunConfig::parse(config_text)?;
        Ok(text_digest(&parsed.canonical_text()) == self.config_digest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
