//! Run manifests and atomic output writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub workers: usize,
    /// Fully resolved configuration after defaults and seed overrides.
    pub config: serde_json::Value,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub inputs: Vec<FileHash>,
    /// Output paths are relative to the manifest's directory.
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot move output into {}", path.display()))?;
    Ok(())
}

/// Collects the outputs of one command under a directory and writes the
/// manifest last.
pub struct RunOutputs {
    pub dir: PathBuf,
    outputs: Vec<FileHash>,
    inputs: Vec<FileHash>,
    started: u128,
    manifest_name: String,
}

impl RunOutputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            started: now_ms(),
            manifest_name: MANIFEST_NAME.to_string(),
        })
    }

    /// Overrides the manifest file name (used when a command writes one file
    /// into a shared directory).
    pub fn set_manifest_name(&mut self, name: &str) {
        self.manifest_name = name.to_string();
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Writes `name` (relative to the run directory) and records its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(self, command: &str, seed: u64, workers: usize, config: serde_json::Value) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: "gencls".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: std::env::args().collect(),
            seed,
            workers,
            config,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let json = serde_json::to_vec_pretty(&manifest)?;
        write_atomic(&self.dir.join(&self.manifest_name), &json)?;
        Ok(manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
}

/// Outputs whose current hash differs from the recorded one.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .outputs
        .iter()
        .filter(|o| sha256_file(&dir.join(&o.path)).map_or(true, |h| h != o.sha256))
        .map(|o| o.path.clone())
        .collect()
}
