//! Run manifests. Each subcommand serializes one of these to
//! `manifest.json` in its output directory *before* starting real work, so
//! an interrupted run still records what was attempted: the full argv, the
//! resolved configuration after defaults and overrides, and every RNG seed
//! the run will consume.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    /// Seeds by role ("train", "split", ...). Only seeds the run actually
    /// consumes are listed.
    pub seeds: BTreeMap<String, u64>,
    /// Resolved configuration, sufficient to reproduce the run.
    pub config: serde_json::Value,
    /// File names written into the output directory, by role.
    pub artifacts: BTreeMap<String, String>,
    /// Scalar facts about the inputs: row counts, labeled-example counts.
    pub stats: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: BTreeMap::new(),
            config,
            artifacts: BTreeMap::new(),
            stats: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, role: &str, value: u64) -> &mut Self {
        self.seeds.insert(role.to_string(), value);
        self
    }

    pub fn artifact(&mut self, role: &str, file_name: &str) -> &mut Self {
        self.artifacts.insert(role.to_string(), file_name.to_string());
        self
    }

    pub fn stat(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.stats.insert(key.to_string(), value.into());
        self
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, body)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
