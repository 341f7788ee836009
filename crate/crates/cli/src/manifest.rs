//! Per-run provenance written next to every set of outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>, config_hash: String, seed: u64, artifacts: Vec<String>) -> Self {
        RunManifest {
            command_line,
            config_hash,
            seed,
            artifacts,
            tool_version: format!("mixerbench {}", env!("CARGO_PKG_VERSION")),
        }
    }

    /// Writes `manifest.json` into `dir`, replacing any earlier one.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }
}
