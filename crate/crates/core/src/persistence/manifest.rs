use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{digest_file, write_json};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory when the file lives below it.
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, base: &Path) -> Result<Self> {
        let sha256 = digest_file(path)?;
        let rel = path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf());
        Ok(FileDigest { path: rel, sha256 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub toolkit_version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ManifestMismatch {
    Missing(PathBuf),
    Modified { path: PathBuf, expected: String, found: String },
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(run_id: &str, command: Vec<String>, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            run_id: run_id.to_string(),
            command,
            config,
            seed,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: now(),
            finished_unix: 0,
        }
    }

    pub fn file_name(run_id: &str) -> String {
        format!("{run_id}.manifest.json")
    }

    /// Stamps the finish time and writes `<run-id>.manifest.json` into `dir`.
    pub fn finish(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = now();
        self.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let path = dir.join(Self::file_name(&self.run_id));
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Re-digests every listed input and output; `dir` resolves relative paths.
    pub fn verify(&self, dir: &Path) -> Vec<ManifestMismatch> {
        let mut out = Vec::new();
        for f in self.inputs.iter().chain(&self.outputs) {
            let full = if f.path.is_absolute() { f.path.clone() } else { dir.join(&f.path) };
            match digest_file(&full) {
                Err(_) => out.push(ManifestMismatch::Missing(f.path.clone())),
                Ok(d) if d != f.sha256 => out.push(ManifestMismatch::Modified {
                    path: f.path.clone(),
                    expected: f.sha256.clone(),
                    found: d,
                }),
                Ok(_) => {}
            }
        }
        out
    }

    /// Output digests keyed by path, for comparing two runs.
    pub fn output_digests(&self) -> Vec<(PathBuf, String)> {
        self.outputs.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
    }
}
