//! CSV and JSON persistence.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::experiment::{CellSummary, ExperimentConfig, ResultRow, ResultsTable, RowFailure};
use crate::error::{Error, Result};

const HEADER: [&str; 8] = ["N", "sigma", "R0", "trial", "product_error", "sign_error", "objective", "converged"];

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    let field = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            err.field().and_then(|i| HEADER.get(i as usize)).map(|s| s.to_string())
        }
        _ => None,
    };
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        kind => Error::Parse { path: path.to_path_buf(), line, field, message: csv_message(&kind) },
    }
}

fn csv_message(kind: &csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::Deserialize { err, .. } => err.kind().to_string(),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        other => format!("{other:?}"),
    }
}

/// Writes one CSV row per trial (header only for an empty table), with LF
/// line endings.
pub fn export_results(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(HEADER).map_err(|e| csv_error(path, e))?;
    for row in &table.rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    summaries: &'a [CellSummary],
    failures: &'a [RowFailure],
}

/// Writes the cell summaries and solver failures as JSON.
pub fn export_summary(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(&SummaryFile { summaries: &table.summaries, failures: &table.failures })
        .expect("summaries serialize");
    fs::write(path, body + "\n").map_err(|e| io_error(path, e))
}

/// Reads a CSV written by [`export_results`] and recomputes the summaries.
/// Solver failure messages live only in the summary JSON.
pub fn load_results(path: impl AsRef<Path>) -> Result<ResultsTable> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: Some(1),
            field: None,
            message: format!(
                "expected header {}, found {}",
                HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let rows =
        r.deserialize::<ResultRow>().collect::<std::result::Result<Vec<_>, _>>().map_err(|e| csv_error(path, e))?;
    Ok(ResultsTable::from_rows(rows))
}

/// Parses and validates an experiment config. Syntax and schema errors carry
/// the line and, when known, the offending field.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        let message = e.to_string();
        let field = message.split('`').nth(1).filter(|_| message.contains("field")).map(str::to_string);
        Error::Parse { path: path.to_path_buf(), line: Some(e.line() as u64), field, message }
    })?;
    config.validate()?;
    Ok(config)
}
