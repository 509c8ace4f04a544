//! CSV and JSON files: writers with a fixed byte layout and the two CSV
//! readers (path input for `decompose`, variogram input for `holder`).

use std::path::Path;

use serde::Serialize;

use mfbm_core::Grid;

use crate::error::{CliError, CliResult};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with a header row and LF line endings.
pub fn csv_bytes<I>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes)
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    names.iter().find_map(|n| headers.iter().position(|h| h == *n))
}

fn parse_f64(field: &str, row: usize, name: &str) -> Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("row {row}: `{field}` is not a number in column `{name}`"))?;
    if !v.is_finite() {
        return Err(format!("row {row}: non-finite value in column `{name}`"));
    }
    Ok(v)
}

/// A path observed at the nodes of a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathData {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Reads columns `t` and `mixed` (or `x`); times must start at 0 and be
/// uniformly spaced.
pub fn parse_path_csv(bytes: &[u8]) -> Result<PathData, String> {
    let mut rdr = reader(bytes);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let ti = column(&headers, &["t"]).ok_or("missing column `t`")?;
    let xi = column(&headers, &["mixed", "x", "X"]).ok_or("missing column `mixed` or `x`")?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = row + 1;
        let t = rec.get(ti).ok_or_else(|| format!("row {row}: missing `t`"))?;
        let x = rec.get(xi).ok_or_else(|| format!("row {row}: missing value"))?;
        times.push(parse_f64(t, row, "t")?);
        values.push(parse_f64(x, row, "mixed")?);
    }
    if times.len() < 3 {
        return Err(format!("need at least 3 rows, found {}", times.len()));
    }
    let n = times.len() - 1;
    let horizon = times[n];
    if !(horizon > 0.0) {
        return Err("final time must be positive".to_string());
    }
    let h = horizon / n as f64;
    for (i, &t) in times.iter().enumerate() {
        if (t - i as f64 * h).abs() > 1e-9 * h {
            return Err(format!("row {}: time {t} is off the uniform grid of step {h}", i + 1));
        }
    }
    if values[0] != 0.0 {
        return Err("path must start at 0".to_string());
    }
    let grid = Grid::new(horizon, n).map_err(|e| e.to_string())?;
    Ok(PathData { grid, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariogramRow {
    pub lag: f64,
    pub value: f64,
    pub method: Option<String>,
    pub stderr: Option<f64>,
}

/// Reads columns `lag` and `value`, plus `method` and `stderr` when present.
pub fn parse_variogram_csv(bytes: &[u8]) -> Result<Vec<VariogramRow>, String> {
    let mut rdr = reader(bytes);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let li = column(&headers, &["lag"]).ok_or("missing column `lag`")?;
    let vi = column(&headers, &["value"]).ok_or("missing column `value`")?;
    let mi = column(&headers, &["method"]);
    let si = column(&headers, &["stderr"]);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = row + 1;
        let get = |i: usize, name: &str| rec.get(i).ok_or_else(|| format!("row {row}: missing `{name}`"));
        let lag = parse_f64(get(li, "lag")?, row, "lag")?;
        let value = parse_f64(get(vi, "value")?, row, "value")?;
        if !(lag > 0.0) {
            return Err(format!("row {row}: lag must be positive"));
        }
        let method = mi.map(|i| get(i, "method").map(str::to_string)).transpose()?;
        let stderr = si.map(|i| get(i, "stderr").and_then(|s| parse_f64(s, row, "stderr"))).transpose()?;
        out.push(VariogramRow { lag, value, method, stderr });
    }
    if out.is_empty() {
        return Err("variogram file has no rows".to_string());
    }
    Ok(out)
}
