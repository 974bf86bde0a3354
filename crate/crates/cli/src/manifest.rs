//! Run manifests: the resolved configuration and file list of one command
//! run. Deliberately timestamp-free so identical runs produce identical
//! bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliResult;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Resolved configuration values of the run.
    pub config: serde_json::Value,
    /// Input descriptors keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// Files written into the output directory, sorted.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: "heightlab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, role: &str, value: impl Into<String>) -> Self {
        self.inputs.insert(role.to_string(), value.into());
        self
    }

    pub fn record_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn write(mut self, dir: &Path) -> CliResult<()> {
        self.outputs.push("manifest.json".to_string());
        self.outputs.sort();
        self.outputs.dedup();
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), json + "\n")
            .map_err(heightlab_core::Error::from)?;
        Ok(())
    }
}
