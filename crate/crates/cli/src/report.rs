//! Report emission: one JSON bundle per run plus plot-ready CSV tables.
//!
//! Serialized artifacts carry the config hash but no timestamps — re-running
//! the same config and seed must reproduce every output byte for byte. Wall
//! clock information goes to stderr only.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Collected records of one subcommand run, stamped with the config hash.
#[derive(Debug, Serialize)]
pub struct ReportBundle {
    pub config_hash: String,
    pub subcommand: String,
    pub records: Vec<serde_json::Value>,
    /// Unix time of creation; logged to stderr, never serialized.
    #[serde(skip)]
    pub created_unix: u64,
}

impl ReportBundle {
    pub fn new(config_hash: &str, subcommand: &str) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ReportBundle {
            config_hash: config_hash.to_string(),
            subcommand: subcommand.to_string(),
            records: Vec::new(),
            created_unix,
        }
    }

    pub fn push<T: Serialize>(&mut self, kind: &str, value: &T) {
        let mut obj = serde_json::Map::new();
        obj.insert("kind".into(), serde_json::Value::String(kind.to_string()));
        obj.insert(
            "config_hash".into(),
            serde_json::Value::String(self.config_hash.clone()),
        );
        obj.insert("data".into(), serde_json::to_value(value).expect("serializable record"));
        self.records.push(serde_json::Value::Object(obj));
    }

    /// Write `report.json` into the output directory.
    pub fn write(&self, out_dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("report.json");
        let mut f = std::fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        eprintln!(
            "[zygmund] wrote {} ({} records, created at unix {})",
            path.display(),
            self.records.len(),
            self.created_unix
        );
        Ok(path)
    }
}

/// Write one CSV table with the given header and rows.
pub fn write_csv(
    out_dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Compact single-line rendering of a rectangle for CSV cells.
pub fn rect_cell(r: &zygmund::geometry::ZygmundRectangle) -> String {
    serde_json::to_string(r).expect("rectangle serializes")
}
