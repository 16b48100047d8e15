use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{BvrError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written into every output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub version: String,
    /// Hex SHA-256 over `blob <len>\0<config text>`.
    pub config_hash: String,
    pub config: String,
    pub seeds: Vec<u64>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Content hash in the style of a git blob id.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, seeds: Vec<u64>) -> Self {
        let text = config.to_toml_string();
        let hash = content_hash(&text);
        Self {
            run_id: format!("{command}-{}", &hash[..12]),
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hash,
            config: text,
            seeds,
            artifacts: Vec::new(),
        }
    }

    pub fn add_artifact(&mut self, rel: impl Into<String>) {
        let rel = rel.into();
        if !self.artifacts.contains(&rel) {
            self.artifacts.push(rel);
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| BvrError::path_io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| BvrError::path_io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| BvrError::path_io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_toml_str(&self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_blob_framing() {
        let mut h = Sha256::new();
        h.update(b"blob 5\0hello");
        let expect: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(content_hash("hello"), expect);
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("train", &RunConfig::default(), vec![1, 2]);
        m.add_artifact("metrics.csv");
        m.add_artifact("metrics.csv");
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.artifacts.len(), 1);
        assert_eq!(back.config().unwrap(), RunConfig::default());
    }
}
