//! JSON summaries, cache keys and atomic file writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residual: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub params: Value,
    pub result: Value,
    pub diagnostics: Diagnostics,
    pub version: String,
}

impl Summary {
    pub fn status(&self) -> &str {
        self.result.get("status").and_then(Value::as_str).unwrap_or("unknown")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Hex SHA-256 of the command name, canonical parameter JSON and version.
pub fn cache_key(command: &str, params: &Value) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(serde_json::to_string(params).expect("params serialize").as_bytes());
    h.update([0]);
    h.update(VERSION.as_bytes());
    format!("{:x}", h.finalize())
}

/// Output location for one run: `<out>/<command>-<key prefix>`.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub stem: String,
}

impl RunFiles {
    pub fn new(dir: &Path, command: &str, key: &str) -> Self {
        Self { dir: dir.to_path_buf(), stem: format!("{command}-{}", &key[..16]) }
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.stem))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.path(".json")
    }

    /// A previous successful summary for the same key and version.
    pub fn cached(&self) -> Option<Summary> {
        let text = std::fs::read_to_string(self.summary_path()).ok()?;
        let summary: Summary = serde_json::from_str(&text).ok()?;
        (summary.version == VERSION && summary.status() == "ok").then_some(summary)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

/// `# key=value` comment lines carrying the parameters and tool version.
pub fn provenance_header(params: &Value) -> String {
    format!("# params={}\n# version={VERSION}\n", serde_json::to_string(params).expect("params serialize"))
}

/// CSV with a provenance header.
pub fn csv_bytes<S: AsRef<str>>(params: &Value, columns: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<Vec<u8>, CliError> {
    let mut buf = provenance_header(params).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(columns).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(AsRef::as_ref)).map_err(io)?;
        }
        w.flush()?;
    }
    Ok(buf)
}
