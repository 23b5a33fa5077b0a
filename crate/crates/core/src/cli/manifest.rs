//! Run manifests: what was run, on which inputs, and what it produced.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<FileDigest>,
    /// Fully resolved command configuration; replaying it reproduces the
    /// outputs.
    pub config: serde_json::Value,
    pub seed: u64,
    pub out_dir: String,
    pub engine_version: String,
    pub timestamp: String,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            column: e.column() as u64,
            message: e.to_string(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    /// Inputs whose current contents differ from the recorded digests.
    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for input in &self.inputs {
            let now = digest_file(Path::new(&input.path))?;
            if now.sha256 != input.sha256 {
                changed.push(input.path.clone());
            }
        }
        Ok(changed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "x").unwrap();
        let m = RunManifest {
            command: "recover".into(),
            inputs: vec![digest_file(&input).unwrap()],
            config: serde_json::json!({"lambda": 10.0}),
            seed: 3,
            out_dir: dir.path().display().to_string(),
            engine_version: ENGINE_VERSION.into(),
            timestamp: "2026-01-01T00:00:00Z".into(),
            outputs: vec![],
        };
        let path = m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
        assert!(m.changed_inputs().unwrap().is_empty());
        fs::write(&input, "y").unwrap();
        assert_eq!(m.changed_inputs().unwrap().len(), 1);
    }
}
