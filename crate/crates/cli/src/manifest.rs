//! Run manifests written next to every artifact.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CmdResult;

/// Path and content hash of one input file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Effective configuration after defaults, config file and flags.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<InputHash>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
    pub status: String,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// SHA-256 over `blob <len>\0` followed by the bytes, as git hashes blobs.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Hashes a file, or every regular file of a directory in name order.
pub fn hash_inputs(path: &Path) -> CmdResult<Vec<InputHash>> {
    let mut files: Vec<PathBuf> = if path.is_dir() {
        fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect()
    } else {
        vec![path.to_path_buf()]
    };
    files.sort();
    files
        .into_iter()
        .map(|p| {
            Ok(InputHash {
                sha256: blob_hash(&fs::read(&p)?),
                path: p.display().to_string(),
            })
        })
        .collect()
}

/// Manifest location for a file artifact: `<file>.manifest.json`.
pub fn beside(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            config,
            seed,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0.0,
            outputs: Vec::new(),
            status: "ok".into(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CmdResult<()> {
        self.inputs.extend(hash_inputs(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(mut self, path: &Path) -> CmdResult<()> {
        self.finished_unix = unix_now();
        fs::write(path, serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}
