use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Arguments after the program name; replaying them reproduces the run.
    pub argv: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    pub version: String,
    pub timestamp: u64,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

pub struct ManifestBuilder {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: Option<f64>,
    pub details: serde_json::Value,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, argv: &[String]) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            argv: argv.to_vec(),
            inputs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            wall_time_secs: None,
            details: serde_json::Value::Null,
        }
    }

    pub fn write(self, path: &Path) -> Result<RunManifest> {
        let digests = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            subcommand: self.subcommand,
            argv: self.argv,
            inputs: digests(&self.inputs)?,
            seeds: self.seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: digests(&self.outputs)?,
            wall_time_secs: self.wall_time_secs,
            details: self.details,
        };
        write_json(path, &manifest)?;
        Ok(manifest)
    }
}

pub fn read(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
}

/// `<out>.manifest.json` next to the primary output.
pub fn default_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
