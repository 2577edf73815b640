use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use l1mdd::io::{sha256_file, write_atomic};
use l1mdd::Result;
use serde::{Deserialize, Serialize};

/// Provenance record written next to the outputs of every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output path → SHA-256 of the bytes written.
    pub outputs: BTreeMap<String, String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub effective_config: serde_json::Value,
    pub tool_version: String,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, config_path: Option<&Path>) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            effective_config: serde_json::Value::Null,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let text = serde_json::to_string_pretty(&self)? + "\n";
        write_atomic(path, text.as_bytes())
    }
}
