//! Run manifests and atomic run directories.
//!
//! Every command writes its outputs into a temporary sibling directory and
//! renames it into place only after the manifest is written, so partial
//! outputs are never left behind. The manifest records the command, the
//! full effective configuration, the seed, schema versions, input and
//! output digests and item counts — enough to re-run or replay the command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Schema tag of manifest files.
pub const MANIFEST_SCHEMA: &str = "raggym.manifest.v1";

/// Manifest file name inside every run directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("run directory {path}: {reason}")]
    Dir { path: String, reason: String },

    #[error("output path {0} exists (pass force to overwrite)")]
    Exists(String),

    #[error("manifest io: {0}")]
    Io(#[from] std::io::Error),

    #[error("manifest serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// The provenance record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub run_id: String,
    pub command: String,
    /// Effective configuration snapshot (global config plus command
    /// arguments), sufficient to re-run the command.
    pub config: serde_json::Value,
    pub seed: u64,
    pub schema_versions: BTreeMap<String, String>,
    /// sha256 digests of the input files, keyed by path.
    pub input_digests: BTreeMap<String, String>,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
    /// Item counts (questions, episodes, tuples, ...).
    pub counts: BTreeMap<String, u64>,
    /// sha256 digests of every output file in the run directory.
    pub output_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        let run_id = compute_run_id(command, &config, seed);
        let mut schema_versions = BTreeMap::new();
        schema_versions.insert(
            "trajectory".to_string(),
            crate::mdp::TRAJECTORY_SCHEMA.to_string(),
        );
        schema_versions.insert("manifest".to_string(), MANIFEST_SCHEMA.to_string());
        RunManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            run_id,
            command: command.to_string(),
            config,
            seed,
            schema_versions,
            input_digests: BTreeMap::new(),
            started_at_ms: epoch_millis(),
            finished_at_ms: 0,
            counts: BTreeMap::new(),
            output_digests: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), ManifestError> {
        self.input_digests
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn count(&mut self, key: &str, value: u64) {
        self.counts.insert(key.to_string(), value);
    }

    /// Loads the manifest of a finished run directory.
    pub fn load(run_dir: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(run_dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Deterministic run id: a digest of the command, effective config and
/// seed. Identical commands with identical configs and seeds share a run
/// id, which keeps replays byte-compatible.
pub fn compute_run_id(command: &str, config: &serde_json::Value, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update(serde_json::to_vec(config).expect("config value serializes"));
    hasher.update(seed.to_le_bytes());
    hex::encode(&hasher.finalize()[..6])
}

pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn epoch_millis() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// An output directory written atomically: files go into `<out>.partial`
/// and the directory is renamed into place on [`RunDir::finalize`].
pub struct RunDir {
    final_path: PathBuf,
    tmp_path: PathBuf,
    force: bool,
}

impl RunDir {
    pub fn create(out: &Path, force: bool) -> Result<Self, ManifestError> {
        if out.exists() && !force {
            return Err(ManifestError::Exists(out.display().to_string()));
        }
        let tmp_path = out.with_extension("partial");
        if tmp_path.exists() {
            std::fs::remove_dir_all(&tmp_path)?;
        }
        std::fs::create_dir_all(&tmp_path)?;
        Ok(RunDir {
            final_path: out.to_path_buf(),
            tmp_path,
            force,
        })
    }

    /// The directory to write outputs into (the temporary location).
    pub fn path(&self) -> &Path {
        &self.tmp_path
    }

    /// Digests every output file into the manifest, writes the manifest,
    /// and renames the directory into its final place.
    pub fn finalize(self, mut manifest: RunManifest) -> Result<(PathBuf, RunManifest), ManifestError> {
        manifest.finished_at_ms = epoch_millis();
        for entry in std::fs::read_dir(&self.tmp_path)? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().to_string();
            manifest
                .output_digests
                .insert(name, sha256_file(&entry.path())?);
        }
        let manifest_json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.tmp_path.join(MANIFEST_FILE), manifest_json + "\n")?;
        if self.final_path.exists() {
            if self.force {
                std::fs::remove_dir_all(&self.final_path)?;
            } else {
                return Err(ManifestError::Exists(self.final_path.display().to_string()));
            }
        }
        std::fs::rename(&self.tmp_path, &self.final_path)?;
        Ok((self.final_path.clone(), manifest))
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        // A failed command never leaves partial outputs behind.
        if self.tmp_path.exists() {
            let _ = std::fs::remove_dir_all(&self.tmp_path);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finalize_digests_every_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let run_dir = RunDir::create(&out, false).unwrap();
        std::fs::write(run_dir.path().join("a.jsonl"), "line\n").unwrap();
        std::fs::write(run_dir.path().join("b.csv"), "x,y\n").unwrap();
        let manifest = RunManifest::new("test", serde_json::json!({}), 1);
        let (path, manifest) = run_dir.finalize(manifest).unwrap();
        assert_eq!(path, out);
        assert!(out.join(MANIFEST_FILE).exists());
        assert_eq!(manifest.output_digests.len(), 2);
        assert!(manifest.output_digests.contains_key("a.jsonl"));
        let loaded = RunManifest::load(&out).unwrap();
        assert_eq!(loaded.run_id, manifest.run_id);
    }

    #[test]
    fn failed_runs_leave_no_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        {
            let run_dir = RunDir::create(&out, false).unwrap();
            std::fs::write(run_dir.path().join("a.jsonl"), "x").unwrap();
            // Dropped without finalize: simulated failure.
        }
        assert!(!out.exists());
        assert!(!out.with_extension("partial").exists());
    }

    #[test]
    fn existing_output_requires_force() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        std::fs::create_dir(&out).unwrap();
        assert!(matches!(
            RunDir::create(&out, false),
            Err(ManifestError::Exists(_))
        ));
        let run_dir = RunDir::create(&out, true).unwrap();
        let (_, _) = run_dir
            .finalize(RunManifest::new("test", serde_json::json!({}), 0))
            .unwrap();
    }

    #[test]
    fn run_id_is_deterministic_and_sensitive() {
        let config = serde_json::json!({"a": 1});
        let id1 = compute_run_id("run", &config, 7);
        let id2 = compute_run_id("run", &config, 7);
        assert_eq!(id1, id2);
        assert_ne!(id1, compute_run_id("run", &config, 8));
        assert_ne!(id1, compute_run_id("collect", &config, 7));
    }
}
