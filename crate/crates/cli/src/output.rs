//! CSV and JSON writers shared by every subcommand.
//!
//! CSV files start with one `#` comment line holding the effective
//! configuration as compact JSON, then a header row and one row per record.
//! JSON files hold a single object with `config` and `records`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A table whose rows serialize to flat JSON objects with the listed keys.
pub struct Table<'a, C: Serialize, R: Serialize> {
    pub config: &'a C,
    pub columns: &'a [&'a str],
    pub records: &'a [R],
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        // serde_json prints the shortest representation that round-trips
        other => other.to_string(),
    }
}

impl<C: Serialize, R: Serialize> Table<'_, C, R> {
    pub fn render(&self, format: Format) -> serde_json::Result<String> {
        let config = serde_json::to_value(self.config)?;
        let records = self
            .records
            .iter()
            .map(serde_json::to_value)
            .collect::<serde_json::Result<Vec<_>>>()?;
        match format {
            Format::Json => {
                let mut top = Map::new();
                top.insert("config".into(), config);
                top.insert("records".into(), Value::Array(records));
                let mut s = serde_json::to_string_pretty(&Value::Object(top))?;
                s.push('\n');
                Ok(s)
            }
            Format::Csv => {
                let mut s = format!(
                    "# {}\n{}\n",
                    serde_json::to_string(&config)?,
                    self.columns.join(",")
                );
                for r in &records {
                    let row: Vec<String> = self.columns.iter().map(|c| cell(&r[*c])).collect();
                    let _ = writeln!(s, "{}", row.join(","));
                }
                Ok(s)
            }
        }
    }
}

/// Writes to `path`, or standard output when absent.
pub fn emit(text: &str, path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}
