use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// What a run read, what it wrote and the resolved settings it used.
/// Output paths are relative to the manifest's directory. No timestamps, so
/// identical runs give identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn record(path: &Path) -> Result<FileRecord, CliError> {
    Ok(FileRecord {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Collects the files a command writes under one output directory.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<FileRecord>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))?;
        self.note(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(journey_ranker::Error::from)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Records a file some other code already wrote into the directory.
    pub fn note(&mut self, name: &str) -> Result<(), CliError> {
        self.written.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_file(&self.path(name))?,
        });
        Ok(())
    }

    pub fn finish(
        mut self,
        command: &str,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<FileRecord>,
    ) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs,
            outputs: std::mem::take(&mut self.written),
        };
        let path = self.path(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(journey_ranker::Error::from)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Re-hashes every output listed in a manifest. Returns the mismatching
/// paths.
pub fn verify(manifest_path: &Path) -> Result<Vec<String>, CliError> {
    let bytes = std::fs::read(manifest_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", manifest_path.display())))?;
    let m: RunManifest = serde_json::from_slice(&bytes).map_err(journey_ranker::Error::from)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    for f in &m.outputs {
        match std::fs::read(dir.join(&f.path)) {
            Ok(b) if hex::encode(Sha256::digest(&b)) == f.sha256 => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok(bad)
}
