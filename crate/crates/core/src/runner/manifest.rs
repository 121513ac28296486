use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub const MANIFEST_FORMAT: &str = "delay-rc/manifest/v1";

/// Everything needed to replay a run and check its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub version: String,
    pub command: String,
    /// Resolved config; the output directory is not part of it.
    pub config: ExperimentConfig,
    /// Every seed the command used, by stream label.
    pub seeds: BTreeMap<String, u64>,
    /// Values drawn or estimated during the run (random lag counts, the
    /// Lyapunov time, ...).
    pub derived: BTreeMap<String, serde_json::Value>,
    pub files: Vec<FileRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let data = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path: name.into(),
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.command));
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!("unsupported manifest format `{}`", m.format)));
        }
        m.config.validate()?;
        Ok(m)
    }

    /// Files in `dir` whose size or digest differ from the record.
    pub fn verify(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut changed = Vec::new();
        for f in &self.files {
            let full = dir.join(&f.path);
            let now = match std::fs::read(&full) {
                Ok(d) => d,
                Err(_) => {
                    changed.push(f.path.clone());
                    continue;
                }
            };
            if now.len() as u64 != f.bytes || sha256_hex(&now) != f.sha256 {
                changed.push(f.path.clone());
            }
        }
        Ok(changed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_input() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
