//! Tables and their CSV/JSON serialization.
//!
//! Output is a pure function of the resolved configuration and the table
//! contents: columns keep their declared order, CSV floats are written with
//! 17 significant digits and JSON floats in shortest round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};

use crate::config::{Resolved, Value};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) => format!("{x:.16e}"),
            Cell::U(n) => n.to_string(),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Cell::F(x) => json!(x),
            Cell::U(n) => json!(n),
            Cell::S(s) => json!(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key = value` provenance for this table only.
    pub notes: Vec<(String, String)>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }
}

/// Context shared by every file of one run.
#[derive(Debug, Clone)]
pub struct RunInfo<'a> {
    pub command: &'a str,
    pub config: &'a Resolved,
}

fn config_json(config: &Resolved) -> Json {
    let mut map = Map::new();
    for (key, value, source) in config.entries() {
        let v = match value {
            Value::Number(x) => json!(x),
            Value::Numbers(x) => json!(x),
            Value::Count(n) => json!(n),
            Value::Bool(b) => json!(b),
            Value::Text(s) => json!(s),
            Value::Texts(s) => json!(s),
            Value::Unset => Json::Null,
        };
        map.insert(
            key.to_string(),
            json!({ "value": v, "source": source.as_str() }),
        );
    }
    Json::Object(map)
}

pub fn render(table: &Table, info: &RunInfo, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::new();
            out.push_str(&format!("# ductsim {}\n", env!("CARGO_PKG_VERSION")));
            out.push_str(&format!("# command = {}\n", info.command));
            out.push_str(&format!("# preset = {}\n", info.config.preset));
            for line in info.config.describe() {
                out.push_str(&format!("# {line}\n"));
            }
            for (k, v) in &table.notes {
                out.push_str(&format!("# {k} = {v}\n"));
            }
            out.push_str(&table.columns.join(","));
            out.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let notes: Map<String, Json> = table
                .notes
                .iter()
                .map(|(k, v)| (k.clone(), json!(v)))
                .collect();
            let rows: Vec<Json> = table
                .rows
                .iter()
                .map(|row| Json::Array(row.iter().map(Cell::json).collect()))
                .collect();
            let doc = json!({
                "meta": {
                    "tool": "ductsim",
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": info.command,
                    "preset": info.config.preset,
                    "seed": info.config.seed(),
                    "config": config_json(info.config),
                    "notes": notes,
                },
                "columns": table.columns,
                "rows": rows,
            });
            let mut s =
                serde_json::to_string_pretty(&doc).expect("JSON serialization of plain values");
            s.push('\n');
            s
        }
    }
}

/// Writes all tables or none: files are staged under temporary names and
/// renamed once every one of them has been written.
pub fn write_tables(
    dir: &Path,
    tables: &[Table],
    info: &RunInfo,
    format: Format,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut staged = Vec::new();
    let mut result = Ok(());
    for table in tables {
        let final_path = dir.join(format!("{}.{}", table.name, format.extension()));
        let tmp = dir.join(format!(".{}.{}.partial", table.name, format.extension()));
        if let Err(e) = fs::write(&tmp, render(table, info, format)) {
            result = Err(CliError::Runtime(format!(
                "cannot write {}: {e}",
                tmp.display()
            )));
            let _ = fs::remove_file(&tmp);
            break;
        }
        staged.push((tmp, final_path));
    }
    if let Err(e) = result {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    let mut written = Vec::new();
    for (tmp, path) in &staged {
        if let Err(e) = fs::rename(tmp, path) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(CliError::Runtime(format!(
                "cannot move output into {}: {e}",
                path.display()
            )));
        }
        written.push(path.clone());
    }
    Ok(written)
}
