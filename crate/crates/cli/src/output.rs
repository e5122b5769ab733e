//! Tabular results written as CSV or JSON.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // 17 significant digits round-trip every double.
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Outcome of a command, echoed in the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    DomainExit,
    NoConvergence,
}

pub struct Report {
    pub command: &'static str,
    pub parameters: Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Map<String, Value>,
    pub status: Status,
}

impl Report {
    pub fn new(command: &'static str, parameters: Value, columns: Vec<String>) -> Self {
        Self {
            command,
            parameters,
            columns,
            rows: Vec::new(),
            summary: Map::new(),
            status: Status::Ok,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn is_partial(&self) -> bool {
        self.status != Status::Ok
    }

    /// Writes to `out`, or stdout when absent. In CSV mode the summary goes to stderr.
    pub fn write(&self, format: Format, out: Option<&Path>) -> io::Result<()> {
        let mut sink: Box<dyn Write> = match out {
            Some(path) => Box::new(File::create(path)?),
            None => Box::new(io::stdout().lock()),
        };
        match format {
            Format::Csv => {
                self.write_csv(&mut sink)?;
                let mut err = io::stderr().lock();
                for (k, v) in &self.summary {
                    writeln!(err, "# {k} = {v}")?;
                }
                if self.is_partial() {
                    writeln!(err, "# partial results: {}", json!(self.status))?;
                }
            }
            Format::Json => {
                let doc = json!({
                    "command": self.command,
                    "parameters": self.parameters,
                    "status": self.status,
                    "partial": self.is_partial(),
                    "columns": self.columns,
                    "rows": self.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                    "summary": self.summary,
                });
                serde_json::to_writer_pretty(&mut sink, &doc)?;
                writeln!(sink)?;
            }
        }
        sink.flush()
    }

    fn write_csv(&self, sink: &mut dyn Write) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.flush()
    }
}
