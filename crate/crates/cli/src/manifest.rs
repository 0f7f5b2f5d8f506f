use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What was run, on what, with which settings.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub config_fingerprint: Option<String>,
    pub timestamp_unix: u64,
    pub versions: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("mpseg".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("checkpoint_format".to_string(), mpseg::training::CHECKPOINT_VERSION.to_string());
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config_paths: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            config_fingerprint: None,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            versions,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
