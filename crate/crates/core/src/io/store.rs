//! Atomic persistence of run outputs with a hashed manifest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

/// One output file held in memory until saved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
    /// Short description of the file's layout, e.g. its CSV header.
    pub schema: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>, schema: impl Into<String>) -> Self {
        Artifact {
            name: name.into(),
            bytes,
            schema: schema.into(),
        }
    }

    /// Uses the first line of a CSV as its schema.
    pub fn csv(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        let header = bytes
            .split(|b| *b == b'\n')
            .next()
            .map(|l| String::from_utf8_lossy(l).into_owned())
            .unwrap_or_default();
        Artifact::new(name, bytes, header)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
    pub schema: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_s: f64,
    pub created_unix_s: u64,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(Error::invalid(format!(
            "artifact name `{name}` is not a plain file name"
        )));
    }
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &target).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(&target, e)
    })?;
    Ok(target)
}

/// Writes every artifact through a temporary file and rename, then the manifest.
/// Any failure leaves no manifest behind.
pub fn save_results(artifacts: &[Artifact], dir: impl AsRef<Path>, info: &RunInfo) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stale = dir.join(MANIFEST_NAME);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let mut files = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        write_atomic(dir, &a.name, &a.bytes)?;
        files.push(ManifestEntry {
            name: a.name.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len(),
            schema: a.schema.clone(),
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        command: info.command.clone(),
        seed: info.seed,
        config_hash: info.config_hash.clone(),
        wall_time_s: info.wall_time_s,
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        files,
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(dir, MANIFEST_NAME, &text)?;
    Ok(manifest)
}
