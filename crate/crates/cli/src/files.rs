//! Plain-text matrix and label files shared between pipeline stages.
//! Values are written with Rust's shortest-round-trip float formatting, so
//! reading a file back reproduces every bit.

use std::fs;
use std::path::Path;

use impute_core::dataset::{Dataset, LabelSet};
use ndarray::Array2;

use crate::error::CliError;

pub fn write_matrix(path: &Path, rows: &Array2<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for row in rows.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0usize;
    for (number, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut count = 0usize;
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|e| {
                CliError::bad_file(path, format!("line {}: bad number `{cell}`: {e}", number + 1))
            })?;
            values.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(CliError::bad_file(
                    path,
                    format!("line {}: expected {w} columns, found {count}", number + 1),
                ));
            }
            Some(_) => {}
        }
        height += 1;
    }
    let width = width.unwrap_or(0);
    Array2::from_shape_vec((height, width), values)
        .map_err(|e| CliError::bad_file(path, e.to_string()))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    write_matrix(path, &data.samples)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset { samples: read_matrix(path)? })
}

pub fn write_labels(path: &Path, labels: &LabelSet) -> Result<(), CliError> {
    let mut out = String::new();
    for label in &labels.labels {
        out.push_str(&label.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelSet, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut labels = Vec::new();
    for (number, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let label: u8 = line.trim().parse().map_err(|e| {
            CliError::bad_file(path, format!("line {}: bad label `{line}`: {e}", number + 1))
        })?;
        labels.push(label);
    }
    Ok(LabelSet { labels })
}
