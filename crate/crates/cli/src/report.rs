//! JSON run reports.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct DataFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub ingest_seconds: f64,
    pub compute_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    /// SHA-256 over the normalized config (without run-environment fields)
    /// and the contents of every data file it references.
    pub fingerprint: String,
    pub config: RunConfig,
    pub data_files: Vec<DataFile>,
    pub results: serde_json::Value,
    pub timings: Timings,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fingerprint of what determines the results: everything in the config
/// except worker count and output path, plus the data file contents.
pub fn fingerprint(config: &RunConfig, files: &[DataFile]) -> String {
    let mut normalized = config.clone();
    normalized.workers = 1;
    normalized.output = None;
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&normalized).expect("config serializes"));
    for f in files {
        hasher.update(f.path.as_bytes());
        hasher.update(f.sha256.as_bytes());
    }
    hex::encode(hasher.finalize())
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Writes to a sibling temporary file and renames it into place, so a
/// failed run never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(CliError::io(format!("writing {}", path.display()), e));
    }
    Ok(())
}
