//! Run manifests: every command writes one next to its outputs so a run
//! can be audited and replayed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Versions {
    pub giver_core: String,
    pub giver_cli: String,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&data)))
}

/// Collects a run directory: resolves the output root, creates the
/// per-run directory, and accumulates output files for the manifest.
pub struct RunDir {
    pub dir: PathBuf,
    started: u64,
    outputs: Vec<String>,
}

impl RunDir {
    /// `explicit` wins; otherwise $GIVER_OUT_DIR or ./runs, with a
    /// timestamped per-run subdirectory.
    pub fn create(command: &str, seed: Option<u64>, explicit: Option<PathBuf>) -> Result<Self> {
        let dir = match explicit {
            Some(d) => d,
            None => {
                let root = std::env::var_os("GIVER_OUT_DIR")
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("runs"));
                let stamp = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_nanos())
                    .unwrap_or(0);
                root.join(format!(
                    "{command}-{stamp}-seed{}",
                    seed.map_or_else(|| "none".to_string(), |s| s.to_string())
                ))
            }
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            started: now_unix(),
            outputs: Vec::new(),
        })
    }

    /// Writes a file into the run directory and registers it.
    pub fn write_file(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    /// Seals the run: hashes every registered output and writes
    /// manifest.json.
    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
    ) -> Result<PathBuf> {
        let mut outputs = Vec::new();
        for name in &self.outputs {
            outputs.push(OutputFile {
                path: name.clone(),
                sha256: sha256_file(&self.dir.join(name))?,
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            seed,
            versions: Versions {
                giver_core: giver_core::VERSION.to_string(),
                giver_cli: env!("CARGO_PKG_VERSION").to_string(),
            },
            started_unix: self.started,
            finished_unix: now_unix(),
            outputs,
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}
