//! Run records and their on-disk formats.
//!
//! A run writes `<run_id>.json` (the whole [`RunRecord`]) and one
//! `<run_id>.<table>.csv` per result table. CSV files are UTF-8 with a header
//! row, `.` as the decimal separator, floats in shortest round-trip form and
//! empty fields for missing values. They contain no timestamps, so reruns
//! with the same config and seed give identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// A typed table cell. Non-finite floats are stored as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn float(x: f64) -> Cell {
        if x.is_finite() {
            Cell::Float(x)
        } else {
            Cell::Text(format!("{x}"))
        }
    }

    pub fn int<T: TryInto<i64>>(x: T) -> Cell {
        x.try_into().map(Cell::Int).unwrap_or(Cell::Null)
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn opt(x: Option<f64>) -> Cell {
        x.map_or(Cell::Null, Cell::float)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    fn csv_field(&self) -> String {
        match self {
            Cell::Null => String::new(),
            Cell::Bool(b) => b.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:?}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::float(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Cell {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(internal)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_field)).map_err(internal)?;
        }
        w.into_inner().map_err(|e| HarnessError::Internal(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarningKind {
    Truncation,
    NonConvergence,
    DroppedSamples,
}

impl WarningKind {
    pub fn name(&self) -> &'static str {
        match self {
            WarningKind::Truncation => "truncation",
            WarningKind::NonConvergence => "non-convergence",
            WarningKind::DroppedSamples => "dropped-samples",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub message: String,
}

impl Warning {
    pub fn new(kind: WarningKind, message: impl Into<String>) -> Self {
        Warning { kind, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    /// Canonical config; hashing it reproduces `config_hash`.
    pub config: serde_json::Value,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, Cell>,
    pub warnings: Vec<Warning>,
}

impl RunRecord {
    pub fn run_id(command: &str, config_hash: &str, seed: u64) -> String {
        format!("{command}-{}-{seed}", &config_hash[..12.min(config_hash.len())])
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn csv_path(dir: &Path, run_id: &str, table: &str) -> PathBuf {
        dir.join(format!("{run_id}.{table}.csv"))
    }

    pub fn json_path(dir: &Path, run_id: &str) -> PathBuf {
        dir.join(format!("{run_id}.json"))
    }
}

fn internal(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Internal(e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// Writes the record in the requested formats and returns the paths written.
pub fn persist(record: &RunRecord, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut written = Vec::new();
    if format.json() {
        let path = RunRecord::json_path(dir, &record.run_id);
        let mut text = serde_json::to_string_pretty(record).map_err(internal)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        written.push(path);
    }
    if format.csv() {
        for t in &record.tables {
            let path = RunRecord::csv_path(dir, &record.run_id, &t.name);
            std::fs::write(&path, t.to_csv()?).map_err(|e| io_error(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Reads `<run_id>.json` from `dir`.
pub fn load(dir: &Path, run_id: &str) -> Result<RunRecord, HarnessError> {
    load_file(&RunRecord::json_path(dir, run_id))
}

pub fn load_file(path: &Path) -> Result<RunRecord, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))?;
    match value.get("schema").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        found => {
            return Err(HarnessError::SchemaVersion {
                path: path.display().to_string(),
                found: found.map_or("missing".into(), |v| v.to_string()),
            })
        }
    }
    serde_json::from_value(value).map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
}
