//! Run manifests: what ran, with which configuration, producing what.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use aquaperc::{Error, Result};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration serialized as JSON.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
}

pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let text = serde_json::to_string(config).map_err(|e| Error::Numeric(format!("hashing config: {e}")))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seeds: &[u64], outputs: &[&Path], start: Instant) -> Result<Self> {
        Ok(RunManifest {
            command: command.into(),
            config_hash: config_hash(config)?,
            seeds: seeds.to_vec(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    /// Writes `<out>.manifest.json` next to a single-file output.
    pub fn write_beside(&self, out: &Path) -> Result<()> {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.write(&out.with_file_name(name))
    }

    /// Writes `manifest.json` inside an output directory.
    pub fn write_into(&self, dir: &Path) -> Result<()> {
        self.write(&dir.join("manifest.json"))
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(e.to_string()))?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}
