use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use picar::mcmc::{config_hash, ChainManifest};
use picar::pipeline::{FitConfig, StageTimings};
use picar::study::{CellFailure, CellTiming, StudyConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub picar_core: String,
    pub picar_cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            picar_core: picar::VERSION.into(),
            picar_cli: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// A file and its SHA-256, with the path relative to the output directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Collects the digests of written files in a stable order.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    files: Vec<FileDigest>,
}

impl Outputs {
    pub fn new(root: &Path) -> Self {
        Outputs {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        write_file(&path, bytes)?;
        self.files.push(FileDigest {
            path: rel.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn finish(mut self) -> Vec<FileDigest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files
    }
}

/// Record of `simulate`; contains no timings, so identical configurations
/// give byte-identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub versions: Versions,
    pub seed: u64,
    pub config_hash: String,
    pub config: StudyConfig,
    pub replicates: usize,
    pub files: Vec<FileDigest>,
}

/// Record of `fit`, sufficient for `predict` to rebuild the chain and basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub versions: Versions,
    /// Family in `binary`, `count`, `svc`, `ordinal:J` form.
    pub family: String,
    pub seed: u64,
    pub replicate: u64,
    pub config_hash: String,
    pub fit: FitConfig,
    pub data: FileDigest,
    pub basis: String,
    pub mesh_nodes: Option<usize>,
    pub rank: usize,
    pub score_name: String,
    pub score: f64,
    pub misclassification: Option<f64>,
    pub chain: ChainManifest,
    pub stage_timings: StageTimings,
    pub outputs: Vec<FileDigest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub versions: Versions,
    pub preset: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: StudyConfig,
    pub wall_time_seconds: f64,
    pub cell_timings: Vec<CellTiming>,
    /// Cells that did not complete; the tables omit them.
    pub failures: Vec<CellFailure>,
    pub outputs: Vec<FileDigest>,
}

pub fn study_hash(config: &StudyConfig) -> String {
    config_hash(config)
}
