//! Run manifests: enough provenance to tell whether two runs must agree.
//!
//! Two runs with equal manifests (same config hash, input digests, seed,
//! and version) produce byte-identical reports.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Resolved input path → SHA-256 of its contents.
    pub input_sha256: BTreeMap<String, String>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn digest_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(
        seed: u64,
        config: &Path,
        inputs: &[std::path::PathBuf],
        outputs: Vec<String>,
    ) -> anyhow::Result<Self> {
        let mut input_sha256 = BTreeMap::new();
        for path in inputs {
            input_sha256.insert(path.display().to_string(), digest_file(path)?);
        }
        Ok(RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: digest_file(config)?,
            input_sha256,
            outputs,
        })
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}
