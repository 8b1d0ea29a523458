//! Result files: CSV tables with `# key: value` metadata lines, and JSON
//! summaries carrying the same metadata.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Add every leaf of a serializable value as a dotted key.
    pub fn push_flattened(&mut self, prefix: &str, value: &impl Serialize) -> Result<&mut Self> {
        let v = toml::Value::try_from(value).map_err(|e| Error::Config(e.to_string()))?;
        self.flatten(prefix, &v);
        Ok(self)
    }

    fn flatten(&mut self, prefix: &str, v: &toml::Value) {
        match v {
            toml::Value::Table(t) => {
                for (k, child) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    self.flatten(&key, child);
                }
            }
            toml::Value::String(s) => {
                self.push(prefix, s);
            }
            other => {
                self.push(prefix, other);
            }
        }
    }
}

/// Named numeric columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn csv_string(meta: &Metadata, table: &Table) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &meta.entries {
        out.push_str(&format!("# {k}: {}\n", v.replace('\n', " ")));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

/// Parse a file written by [`csv_string`]. Comment lines without a
/// `key: value` shape are skipped.
pub fn parse_csv(text: &str) -> Result<(Metadata, Table)> {
    let mut meta = Metadata::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line[1..].trim_start().split_once(": ") {
            meta.push(k.trim(), v);
        }
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut table = Table { columns, rows: Vec::new() };
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Config(format!("line {}: {e}", rec.position().map_or(0, |p| p.line()))))?;
        table.rows.push(row);
    }
    Ok((meta, table))
}

pub fn write_csv(path: &Path, meta: &Metadata, table: &Table) -> Result<()> {
    fs::write(path, csv_string(meta, table)?)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<(Metadata, Table)> {
    parse_csv(&fs::read_to_string(path)?)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: serde_json::Map<String, serde_json::Value>,
    result: &'a T,
}

pub fn json_string<T: Serialize>(meta: &Metadata, value: &T) -> Result<String> {
    let meta = meta
        .entries
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
        .collect();
    let mut s = serde_json::to_string_pretty(&Envelope { meta, result: value })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Metadata, value: &T) -> Result<()> {
    fs::write(path, json_string(meta, value)?)?;
    Ok(())
}
