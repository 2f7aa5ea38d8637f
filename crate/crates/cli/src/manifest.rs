use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mfrn_core::scenarios::{Scenario, ScenarioName};
use mfrn_core::{Activation, RunConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written before any solver output and rewritten with timings at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: ScenarioName,
    pub activation: Activation,
    pub config: RunConfig,
    pub output_dir: String,
    /// SHA-256 over `blob <len>\0<resolved scenario JSON>`.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub status: String,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(s: &Scenario, out: &Path) -> Self {
        Self {
            scenario: s.name,
            activation: s.activation,
            config: s.config.clone(),
            output_dir: out.display().to_string(),
            config_hash: config_hash(s),
            seeds: s.seeds.clone(),
            status: "running".into(),
            timings: BTreeMap::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Git-style content hash of the resolved scenario.
pub fn config_hash(s: &Scenario) -> String {
    let body = serde_json::to_string(s).expect("scenario serializes");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(body.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
