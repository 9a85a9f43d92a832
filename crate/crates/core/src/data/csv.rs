//! Numeric CSV ingestion and feature export.
//!
//! Input: a rectangular table of numbers, optionally with a header line
//! and one integer label column. Output: `f1..fd[,label]` with 17
//! significant digits per value, enough for a lossless decimal round
//! trip of every f64.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::DataSplit;

/// Parses CSV text. `label_column` is a 0-based column index pulled out as
/// integer labels; the remaining columns become features in order. Line
/// numbers in errors are 1-based and count the header.
pub fn parse_csv(text: &str, label_column: Option<usize>, has_header: bool) -> Result<DataSplit> {
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;

    for (line_no, line) in text.lines().enumerate() {
        if has_header && line_no == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => {
                if let Some(lc) = label_column {
                    if lc >= cells.len() {
                        return Err(Error::format(format!(
                            "label column {lc} out of range for {} columns",
                            cells.len()
                        )));
                    }
                }
                width = Some(cells.len());
            }
            Some(w) if w != cells.len() => {
                return Err(Error::format(format!(
                    "ragged row at line {}: {} cells, expected {w}",
                    line_no + 1,
                    cells.len()
                )));
            }
            _ => {}
        }
        for (col, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if label_column == Some(col) {
                let label: i64 = cell.parse().map_err(|_| {
                    Error::format(format!(
                        "non-integer label {cell:?} at line {}, column {}",
                        line_no + 1,
                        col + 1
                    ))
                })?;
                if label < 0 {
                    return Err(Error::format(format!(
                        "negative label at line {}, column {}",
                        line_no + 1,
                        col + 1
                    )));
                }
                labels.push(label as usize);
            } else {
                let value: f64 = cell.parse().map_err(|_| {
                    Error::format(format!(
                        "non-numeric cell {cell:?} at line {}, column {}",
                        line_no + 1,
                        col + 1
                    ))
                })?;
                features.push(value);
            }
        }
        rows += 1;
    }

    let feature_width = width.map_or(0, |w| w - usize::from(label_column.is_some()));
    let matrix = Array2::from_shape_vec((rows, feature_width), features)
        .map_err(|e| Error::format(format!("CSV reshape failed: {e}")))?;
    DataSplit::new(matrix, label_column.map(|_| labels))
}

/// Loads a CSV file; see [`parse_csv`].
pub fn load_csv(path: &Path, label_column: Option<usize>, has_header: bool) -> Result<DataSplit> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, label_column, has_header)
}

/// Renders features (and labels) as CSV text with a `f1..fd[,label]`
/// header and 17 significant digits per value.
pub fn format_features_csv(features: &Array2<f64>, labels: Option<&[usize]>) -> Result<String> {
    if let Some(l) = labels {
        if l.len() != features.nrows() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                l.len(),
                features.nrows()
            )));
        }
    }
    let mut out = String::new();
    let header: Vec<String> = (1..=features.ncols()).map(|i| format!("f{i}")).collect();
    out.push_str(&header.join(","));
    if labels.is_some() {
        if !header.is_empty() {
            out.push(',');
        }
        out.push_str("label");
    }
    out.push('\n');
    for (r, row) in features.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&cells.join(","));
        if let Some(l) = labels {
            if !cells.is_empty() {
                out.push(',');
            }
            out.push_str(&l[r].to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes [`format_features_csv`] output to a file.
pub fn export_features_csv(
    path: &Path,
    features: &Array2<f64>,
    labels: Option<&[usize]>,
) -> Result<()> {
    Ok(std::fs::write(
        path,
        format_features_csv(features, labels)?,
    )?)
}
