use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ics::{IcsError, Result};
use serde::Serialize;
use serde_json::Value;

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_secs: f64,
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    started: Instant,
    outputs: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(command: &'static str, config: Value, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command,
            config,
            seed,
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes the manifest to `path`; the manifest lists itself last.
    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.output(path);
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: self.config,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        write_json(path, &manifest)
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IcsError::Invariant(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| IcsError::io(path, e))
}

/// `out.txt` → `out.manifest.json`.
pub fn default_manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}
