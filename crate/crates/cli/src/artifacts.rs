//! Output files: atomic writes, content hashes and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Builds a CSV document in memory so it can be written atomically.
pub fn csv_bytes<F>(fill: F) -> anyhow::Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> anyhow::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    /// Describes `dir/name`, recording the name relative to `dir`.
    pub fn of(dir: &Path, name: &str) -> anyhow::Result<Self> {
        let path = dir.join(name);
        let bytes = std::fs::metadata(&path).with_context(|| format!("missing artifact {}", path.display()))?.len();
        Ok(Self {
            path: name.to_string(),
            sha256: file_sha256(&path)?,
            bytes,
        })
    }

    pub fn input(path: &Path) -> anyhow::Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
            bytes: std::fs::metadata(path)?.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Hash of the persisted config snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    /// Effective optimizer settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Runs with equal values share objective definitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_scaling: Option<String>,
    /// `synthetic` when generated data or a built-in system was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watermark: Option<String>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn new(command: &str, started: DateTime<Utc>) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: None,
            seed: None,
            algorithm: None,
            settings: None,
            budget: None,
            objective_scaling: None,
            watermark: None,
            started,
            finished: started,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Hashes the named files in `dir`, stamps the end time and writes the
    /// manifest last.
    pub fn finish(self, dir: &Path, names: &[&str]) -> anyhow::Result<PathBuf> {
        self.finish_as(dir, MANIFEST, names)
    }

    pub fn finish_as(mut self, dir: &Path, file: &str, names: &[&str]) -> anyhow::Result<PathBuf> {
        self.artifacts = names.iter().map(|n| Artifact::of(dir, n)).collect::<anyhow::Result<_>>()?;
        self.finished = Utc::now();
        let path = dir.join(file);
        write_json(&path, &self)?;
        Ok(path)
    }
}
