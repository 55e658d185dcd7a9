use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::write_json;

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: String, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_digest,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    /// Stamps the duration since `started` and writes `<dir>/<command>.manifest.json`.
    pub fn finish(mut self, dir: &Path, started: Instant) -> Result<PathBuf> {
        self.wall_clock_s = started.elapsed().as_secs_f64();
        let path = dir.join(format!("{}.manifest.json", self.command));
        write_json(&path, &self)?;
        Ok(path)
    }
}
