//! CSV and JSON output, matrix-file input.
//!
//! Reals are written as `{:.16e}` (17 significant digits), which parses back
//! to the identical `f64`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interpolators::Sample;

/// Magic prefix of the optional header line in matrix files.
pub const MATRIX_HEADER_PREFIX: &str = "#fields";

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A row type with a fixed CSV header.
pub trait CsvRecord {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn emit_csv<R: CsvRecord>(records: &[R], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(R::HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(r.fields()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`emit_csv`]: returns the header and raw rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a, C: Serialize, E: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a C,
    pub seeds: serde_json::Value,
    pub wall_time_seconds: f64,
    pub results: E,
}

/// Version string in the style of `git describe`, fixed at build time.
pub fn version_string() -> &'static str {
    env!("SPECTRAL_TRANSPORT_VERSION")
}

pub fn emit_json_summary<T: Serialize>(summary: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Degenerate(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Parses the whitespace-separated matrix format: `d` feature columns then the
/// response, one sample per line. A first line starting with `#fields` is
/// skipped, as are blank lines.
pub fn ingest_matrix_file(path: &Path) -> Result<Sample> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

fn parse_matrix(text: &str, path: &Path) -> Result<Sample> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut last_line = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() || (k == 0 && trimmed.starts_with(MATRIX_HEADER_PREFIX)) {
            continue;
        }
        let row = trimmed
            .split_whitespace()
            .map(|cell| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("not a finite number: {cell:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None if row.len() < 2 => {
                return Err(parse_err(line, "need at least one feature and a response".into()))
            }
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(line, format!("expected {w} columns, found {}", row.len())))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(parse_err(last_line.max(1), format!("need at least 2 samples, found {}", rows.len())));
    }
    let w = width.unwrap_or(0);
    let d = w - 1;
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[d]));
    Sample::new(x, y)
}

pub fn write_matrix_file(sample: &Sample, path: &Path) -> Result<()> {
    let d = sample.dim();
    let mut out = String::from(MATRIX_HEADER_PREFIX);
    for j in 0..d {
        out.push_str(&format!(" x{}", j + 1));
    }
    out.push_str(" y\n");
    for i in 0..sample.n() {
        let mut cells: Vec<String> = sample.features().row(i).iter().map(|v| fmt_real(*v)).collect();
        cells.push(fmt_real(sample.responses()[i]));
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
