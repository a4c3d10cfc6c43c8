//! Run manifests: one sidecar per configuration, shared by every run that reproduces it.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub argv: Vec<String>,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Normalized settings that determine the output bytes.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub model_hash: String,
    pub tool_version: String,
    pub runs: Vec<RunRecord>,
}

/// Hash over everything that determines output content; scheduling settings are excluded.
pub fn config_hash(command: &str, config: &serde_json::Value, model_hash: &str) -> String {
    let mut h = Sha256::new();
    for part in [command, &config.to_string(), model_hash, TOOL_VERSION] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// File name of the manifest for a configuration; outputs refer to it by this name.
pub fn manifest_name(config_hash: &str) -> String {
    format!("autoqec-{}.manifest.json", &config_hash[..16])
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes or extends the manifest next to `output`, returning its path.
#[allow(clippy::too_many_arguments)]
pub fn record_run(
    output: &Path,
    command: &str,
    config: &serde_json::Value,
    config_hash: &str,
    model_hash: &str,
    run: RunRecord,
) -> Result<PathBuf> {
    let dir = output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let path = dir.join(manifest_name(config_hash));
    let mut manifest = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str::<RunManifest>(&text)
            .ok()
            .filter(|m| m.config_hash == config_hash),
        Err(_) => None,
    }
    .unwrap_or_else(|| RunManifest {
        command: command.to_string(),
        config: config.clone(),
        config_hash: config_hash.to_string(),
        model_hash: model_hash.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        runs: Vec::new(),
    });
    manifest.runs.push(run);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
