use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Provenance block embedded in every JSON output.
pub fn meta(command: &str, config: &RunConfig) -> Value {
    json!({
        "command": command,
        "config_hash": config.hash(),
        "seed": config.seed,
        "versions": {
            "vvkrein": vvkrein::VERSION,
            "vvkrein-cli": env!("CARGO_PKG_VERSION"),
        },
    })
}

/// Output directory handle that records what it writes.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes pretty JSON; `serde_json::Value` objects keep keys sorted.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let value = serde_json::to_value(value)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes through a closure that fills a buffer (CSV, JSONL).
    pub fn with_buffer(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> vvkrein::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("rendering {name}"))?;
        self.bytes(name, &buf)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Wall-clock sidecar, kept apart so scientific outputs stay comparable.
    pub fn sidecar(&mut self, command: &str, started: SystemTime, elapsed: Duration, threads: usize) -> Result<()> {
        let stamp = started.duration_since(UNIX_EPOCH).unwrap_or_default();
        let value = json!({
            "command": command,
            "started_unix_seconds": stamp.as_secs_f64(),
            "wall_seconds": elapsed.as_secs_f64(),
            "threads": threads,
        });
        let name = format!("{command}.run.json");
        let path = self.path(&name);
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
