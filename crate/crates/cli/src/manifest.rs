use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use capforge_core::model::ModelConfig;
use capforge_core::training::{KOverrides, TrainSettings};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFile {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// What was run, on which bytes, with which settings. Enough to rerun a
/// command in single-threaded mode and get the same report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub timestamp_unix: u64,
    pub model: Option<ModelConfig>,
    pub training: Option<TrainSettings>,
    pub k_overrides: Option<KOverrides>,
    pub jobs: usize,
    pub data_files: Vec<DataFile>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            arguments: std::env::args().skip(1).collect(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            model: None,
            training: None,
            k_overrides: None,
            jobs: 1,
            data_files: Vec::new(),
        }
    }

    pub fn add_files(&mut self, files: &[PathBuf]) -> Result<()> {
        for f in files {
            self.data_files.push(digest(f)?);
        }
        Ok(())
    }
}

pub fn digest(path: &Path) -> Result<DataFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let hash = Sha256::digest(&bytes);
    Ok(DataFile {
        path: path.into(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        bytes: bytes.len() as u64,
    })
}
