use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_err, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<FileHash>,
    pub wall_seconds: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn hash_file(path: &Path) -> CliResult<FileHash> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

/// Writes `bytes` into `dir/name` and records its hash.
pub struct ArtifactWriter {
    pub dir: PathBuf,
    pub written: Vec<FileHash>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Self {
        ArtifactWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(FileHash {
            path: PathBuf::from(name),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }

    pub fn read(dir: &Path) -> Option<Manifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
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
}
