use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IlbError, Result};

/// Serializes `rows` as CSV with a header taken from the row type.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| IlbError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| IlbError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| IlbError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

/// Reproducibility record written next to every command's outputs. Holds no
/// timestamps, so identical inputs give an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub modules: BTreeMap<String, String>,
    pub outputs: Vec<OutputDigest>,
}

pub const MODULES: [&str; 6] = ["community", "tariff", "metrics", "patternnet", "selector", "harness"];

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seeds: BTreeMap<String, u64>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seeds,
            modules: MODULES
                .iter()
                .map(|m| (m.to_string(), env!("CARGO_PKG_VERSION").to_string()))
                .collect(),
            outputs: Vec::new(),
        })
    }

    /// Hashes each file; names are recorded relative to `dir` when possible.
    pub fn record(&mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let name = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().into_owned();
            self.outputs.push(OutputDigest {
                file: name,
                sha256: sha256_file(f)?,
            });
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_text(path, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        write_text(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let mut m = RunManifest::new("test", &serde_json::json!({"a": 1}), BTreeMap::new()).unwrap();
        m.record(dir.path(), &[p]).unwrap();
        assert_eq!(m.outputs[0].file, "abc.txt");
        assert_eq!(m.modules.len(), 6);
    }
}
