//! Report persistence: a schema-versioned `report.json` plus per-table CSV
//! files, with a payload hash for byte-level reproducibility checks.

use crate::config::RunConfig;
use qcurv::report::Warning;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct CsvFile {
    pub name: String,
    pub schema_version: u32,
    pub rows: usize,
    #[serde(skip)]
    pub content: String,
}

impl CsvFile {
    /// Builds a CSV from a header and row strings (already comma-joined).
    pub fn new(name: &str, header: &str, rows: Vec<String>) -> Self {
        let mut content = String::with_capacity(rows.len() * 32 + header.len() + 1);
        content.push_str(header);
        content.push('\n');
        let n = rows.len();
        for r in rows {
            content.push_str(&r);
            content.push('\n');
        }
        CsvFile {
            name: name.to_string(),
            schema_version: SCHEMA_VERSION,
            rows: n,
            content,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub artifact_version: &'static str,
    pub timestamp_unix: u64,
    pub config_hash: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub provenance: Provenance,
    pub payload: &'a serde_json::Value,
    pub payload_hash: String,
    pub files: Vec<CsvFile>,
    pub warnings: &'a [Warning],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Hash of the results payload alone: identical configs and seeds must
/// reproduce this byte for byte (timestamps live outside the hash).
pub fn payload_hash(payload: &serde_json::Value) -> String {
    sha256_hex(serde_json::to_string(payload).expect("payload serializes").as_bytes())
}

pub fn write_report(
    dir: &Path,
    config: &RunConfig,
    payload: &serde_json::Value,
    csvs: Vec<CsvFile>,
    warnings: &[Warning],
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    for csv in &csvs {
        let mut f = std::fs::File::create(dir.join(&csv.name))?;
        f.write_all(csv.content.as_bytes())?;
    }
    let config_hash = sha256_hex(
        serde_json::to_string(config)
            .expect("config serializes")
            .as_bytes(),
    );
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        command: &config.command,
        seed: config.seed,
        config,
        provenance: Provenance {
            artifact_version: env!("CARGO_PKG_VERSION"),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config_hash,
        },
        payload,
        payload_hash: payload_hash(payload),
        files: csvs,
        warnings,
    };
    let path = dir.join("report.json");
    let mut f = std::fs::File::create(&path)?;
    f.write_all(serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
    f.write_all(b"\n")?;
    Ok(path)
}

/// 17-significant-digit formatting for CSV numerics: round-trip exact.
pub fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}
