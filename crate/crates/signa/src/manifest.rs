//! Run manifests: the resolved command configuration plus a SHA-256 digest
//! of every output file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{fsutil, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the manifest's directory when possible.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Accepted back by `--config`.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fsutil::read_bytes(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: impl Serialize, seed: Option<u64>) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::json("<config>", e))?;
        Ok(RunManifest { command: command.into(), config, seed, artifacts: Vec::new() })
    }

    /// Digests `paths`, recording them relative to `base`.
    pub fn record(&mut self, base: &Path, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            let rel = p.strip_prefix(base).unwrap_or(p);
            self.artifacts.push(Artifact { path: rel.display().to_string(), sha256: sha256_file(p)? });
        }
        Ok(())
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fsutil::write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        fsutil::read_json(path.as_ref())
    }

    /// Artifacts under `dir` whose current digest differs from the recorded one.
    pub fn mismatches(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            let p = dir.join(&a.path);
            if !p.exists() || sha256_file(&p)? != a.sha256 {
                bad.push(a.path.clone());
            }
        }
        Ok(bad)
    }
}
