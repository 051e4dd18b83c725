//! Output directory handling: artifact files plus a manifest carrying the
//! resolved config, the library version, and a content hash per artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Git-style content hash: sha256 over "blob <len>\0" + bytes, hex-encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    artifacts: BTreeMap<String, String>,
    /// Present for sweeps: false when a single seed makes the stderr column
    /// meaningless (noise-unqualified).
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_qualified: Option<bool>,
    /// True when the run aborted and the artifact set is incomplete.
    partial: bool,
}

/// Collects artifact files under one output directory.
pub struct Workspace {
    root: PathBuf,
    files: Vec<String>,
    pub noise_qualified: Option<bool>,
}

impl Workspace {
    pub fn create(root: &Path) -> Result<Workspace> {
        fs::create_dir_all(root.join("metrics"))?;
        fs::create_dir_all(root.join("checkpoints"))?;
        Ok(Workspace {
            root: root.to_path_buf(),
            files: Vec::new(),
            noise_qualified: None,
        })
    }

    pub fn write_text(&mut self, rel: &str, content: &str) -> Result<()> {
        let path = self.root.join(rel);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.write_text(rel, &latentflow::csvio::table_string(header, rows))
    }

    /// Write the manifest; `partial` marks aborted runs.
    pub fn finish(&self, config: &ExperimentConfig, partial: bool) -> Result<()> {
        let mut artifacts = BTreeMap::new();
        for rel in &self.files {
            let bytes = fs::read(self.root.join(rel))?;
            artifacts.insert(rel.clone(), content_hash(&bytes));
        }
        let manifest = Manifest {
            version: latentflow::VERSION,
            config,
            artifacts,
            noise_qualified: self.noise_qualified,
            partial,
        };
        fs::write(
            self.root.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}
