use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn parse_fields<'a>(fields: impl Iterator<Item = &'a str>) -> Option<Vec<f64>> {
    fields.map(|f| f.trim().parse::<f64>().ok()).collect()
}

/// Numeric rows of a CSV file. A first row that does not parse as numbers is
/// taken to be a header and skipped.
pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match parse_fields(record.iter()) {
            Some(row) => rows.push(row),
            None if idx == 0 => {}
            None => {
                return Err(CliError::Usage(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// A vector given inline as comma-separated decimals, or the path of a one-row
/// CSV file.
pub fn parse_vector(arg: &str) -> CliResult<Vec<f64>> {
    let path = Path::new(arg);
    if path.is_file() {
        let rows = read_rows(path)?;
        return match rows.as_slice() {
            [row] => Ok(row.clone()),
            _ => Err(CliError::Usage(format!(
                "{arg}: expected exactly one numeric row, found {}",
                rows.len()
            ))),
        };
    }
    parse_fields(arg.split(','))
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::Usage(format!("{arg:?} is neither a file nor a comma-separated vector")))
}

pub fn csv_bytes<T: Serialize>(rows: &[T], headers: bool) -> CliResult<Vec<u8>> {
    let mut wtr = csv::WriterBuilder::new().has_headers(headers).from_writer(Vec::new());
    let to_err = |source| CliError::Csv {
        path: "<memory>".into(),
        source,
    };
    for row in rows {
        wtr.serialize(row).map_err(to_err)?;
    }
    wtr.into_inner().map_err(|e| CliError::io("<memory>", e.into_error()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
