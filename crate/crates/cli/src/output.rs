//! Run results, CSV tables and the JSON manifest written next to every set of outputs.

use std::path::{Path, PathBuf};

use calkit::CalError;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ConfigError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Why a command stopped. Usage failures exit 1, numerical ones exit 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<CalError> for Failure {
    fn from(e: CalError) -> Self {
        match e {
            CalError::NonSolvable(_)
            | CalError::DnColumn { .. }
            | CalError::NoContraction { .. }
            | CalError::MaxIter { .. }
            | CalError::NonFinite(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

/// Shortest round-trip text of a float; scientific outside [1e-4, 1e6).
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Comma-separated table with a header row.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Files and metrics produced by one command. `passed` is false when an acceptance check
/// of the command did not hold; the files are still written.
pub struct Run {
    pub files: Vec<(String, Vec<u8>)>,
    pub metrics: Value,
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl Run {
    pub fn new() -> Self {
        Run { files: Vec::new(), metrics: Value::Object(Default::default()), warnings: Vec::new(), passed: true }
    }

    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn metric(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut self.metrics {
            m.insert(key.to_string(), v);
        }
    }

    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.warnings.push(what.into());
        }
    }
}

#[derive(Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub parameters: &'a std::collections::BTreeMap<String, String>,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub status: &'a str,
    pub error: Option<String>,
    pub warnings: &'a [String],
    pub metrics: &'a Value,
    pub outputs: Vec<OutputEntry>,
}

/// Writes the files in order and returns their manifest entries.
pub fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<Vec<OutputEntry>> {
    let mut out = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
        out.push(OutputEntry { file: name.clone(), sha256: sha256_hex(bytes) });
    }
    Ok(out)
}

pub fn manifest_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("{command}.manifest.json"))
}
