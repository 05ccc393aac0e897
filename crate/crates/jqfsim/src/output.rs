//! Output files: CSV tables with full-precision scientific notation and pretty JSON.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Name of the resolved-config echo written next to every result.
pub const CONFIG_ECHO: &str = "config.resolved.json";
pub const ERROR_FILE: &str = "error.json";

/// A rectangular numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            for (k, x) in row.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                write_number(&mut s, *x);
            }
            s.push('\n');
        }
        s
    }

    /// Reads a table written by [`Table::to_csv`] or any numeric CSV with a header.
    pub fn from_csv(text: &str) -> Result<Table, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty CSV")?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2)))
                .collect::<Result<_, _>>()?;
            if row.len() != columns.len() {
                return Err(format!("line {}: expected {} fields, found {}", i + 2, columns.len(), row.len()));
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }
}

/// 17 significant digits round-trip every `f64`.
fn write_number(s: &mut String, x: f64) {
    if x.is_finite() {
        write!(s, "{x:.16e}").expect("string write");
    } else if x.is_nan() {
        s.push_str("nan");
    } else if x > 0.0 {
        s.push_str("inf");
    } else {
        s.push_str("-inf");
    }
}

/// One subcommand's result: `<name>.csv` and `<name>.json`.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub table: Table,
    pub summary: Value,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    std::fs::write(path, contents).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes the artifact and the config echo into `dir`, returning the CSV path.
pub fn write_artifact<C: Serialize>(dir: &Path, artifact: &Artifact, config: &C) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    write_file(&dir.join(CONFIG_ECHO), &to_json(config))?;
    let csv = dir.join(format!("{}.csv", artifact.name));
    write_file(&csv, &artifact.table.to_csv())?;
    write_file(&dir.join(format!("{}.json", artifact.name)), &to_json(&artifact.summary))?;
    Ok(csv)
}
