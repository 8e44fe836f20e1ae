//! CSV and JSON persistence. Tables have a header row, `.` decimals and LF
//! line endings; `-inf` cells are written empty and read back as `-inf`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

fn format_cell(v: f64) -> HarnessResult<String> {
    if v == f64::NEG_INFINITY {
        Ok(String::new())
    } else if v.is_finite() {
        Ok(format!("{v}"))
    } else {
        Err(HarnessError::Numerical(format!("cannot write {v} to a table")))
    }
}

fn parse_cell(s: &str) -> HarnessResult<f64> {
    if s.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    s.parse()
        .map_err(|_| HarnessError::Io(format!("bad numeric cell {s:?}")))
}

pub fn write_table_to<W: Write>(out: W, table: &Table) -> HarnessResult<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        if row.len() != table.header.len() {
            return Err(HarnessError::Io("row width differs from header".into()));
        }
        let cells = row.iter().map(|v| format_cell(*v)).collect::<HarnessResult<Vec<_>>>()?;
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table(path: &Path, table: &Table) -> HarnessResult<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    write_table_to(BufWriter::new(f), table)
}

pub fn read_table_from<R: std::io::Read>(input: R) -> HarnessResult<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut table = Table::new(header);
    for rec in r.records() {
        let rec = rec?;
        table.rows.push(rec.iter().map(parse_cell).collect::<HarnessResult<_>>()?);
    }
    Ok(table)
}

pub fn read_table(path: &Path) -> HarnessResult<Table> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_table_from(f)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> HarnessResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> HarnessResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}
