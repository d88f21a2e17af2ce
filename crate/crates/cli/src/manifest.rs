//! Run manifests and atomic output staging.
//!
//! Every subcommand writes its outputs through a stager: files land under
//! temporary names and are renamed only once the whole command has
//! succeeded, so failures leave no partial outputs. The manifest records
//! the tool version, the parameters and the digest of every input and
//! output, which together determine every output byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lfseq_core::Result;

pub fn sha256_file_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_path(path: &Path) -> Result<String> {
    Ok(sha256_file_bytes(&fs::read(path)?))
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Reproduction record written next to a command's primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
    pub inputs: Vec<ManifestEntry>,
    pub outputs: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            tool: "lfseq",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            params: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.insert(key.to_string(), value.to_string());
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(ManifestEntry {
            path: path.display().to_string(),
            sha256: sha256_path(path)?,
        });
        Ok(())
    }
}

/// Collects pending writes and commits them all at once.
pub struct OutputStager {
    pending: Vec<(PathBuf, PathBuf)>,
}

impl OutputStager {
    pub fn new() -> Self {
        OutputStager {
            pending: Vec::new(),
        }
    }

    /// Stages `bytes` for `path`, writing to a temporary sibling.
    pub fn stage(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        fs::write(&tmp, bytes)?;
        self.pending.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Renames every staged file into place and records digests in the
    /// manifest.
    pub fn commit(mut self, manifest: &mut RunManifest) -> Result<()> {
        for (tmp, path) in self.pending.drain(..) {
            fs::rename(&tmp, &path)?;
            manifest.outputs.push(ManifestEntry {
                path: path.display().to_string(),
                sha256: sha256_path(&path)?,
            });
        }
        Ok(())
    }
}

impl Drop for OutputStager {
    fn drop(&mut self) {
        for (tmp, _) in &self.pending {
            let _ = fs::remove_file(tmp);
        }
    }
}

/// Writes the manifest itself (atomically) next to the primary output.
pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(manifest)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Default manifest location for a primary output path.
pub fn manifest_path_for(primary: &Path) -> PathBuf {
    let mut os = primary.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}
