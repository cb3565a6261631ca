//! Content hashes of every file a run writes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub deterministic: bool,
    /// Path relative to the output directory -> SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: invalid manifest: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    /// Checks `file` (inside `dir`) against its recorded hash.
    pub fn verify(&self, dir: &Path, file: &str) -> Result<()> {
        let expected = self
            .files
            .get(file)
            .ok_or_else(|| CliError::Data(format!("`{file}` is not covered by the manifest")))?;
        let actual = sha256_file(&dir.join(file))?;
        if &actual != expected {
            return Err(CliError::Data(format!(
                "`{file}` does not match its manifest hash (expected {expected}, found {actual})"
            )));
        }
        Ok(())
    }
}
