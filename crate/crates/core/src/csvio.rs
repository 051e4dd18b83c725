//! Deterministic CSV reading and writing.
//!
//! Metric files must be byte-identical across reruns, so floats are always
//! rendered with 17 significant digits (`{:.16e}`) and tables are written in
//! one pass with a fixed header.

use std::fs;
use std::path::Path;

use crate::error::{LfError, Result};

/// 17-significant-digit rendering; round-trips any finite f64 exactly.
pub fn float_cell(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn int_cell(n: u64) -> String {
    n.to_string()
}

/// Render a table with header row. Rows must match the header width.
pub fn table_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    fs::write(path, table_string(header, rows))?;
    Ok(())
}

/// Read a CSV of floats (one point per row). A non-numeric first row is
/// treated as a header and skipped. All rows must share one width.
pub fn read_point_cloud(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    parse_point_cloud(&text)
}

pub fn parse_point_cloud(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(LfError::NonFinite(format!(
                        "non-finite value on line {}",
                        lineno + 1
                    )));
                }
                if let Some(first) = points.first() {
                    if row.len() != first.len() {
                        return Err(LfError::Dimension(format!(
                            "ragged CSV: line {} has {} columns, expected {}",
                            lineno + 1,
                            row.len(),
                            first.len()
                        )));
                    }
                }
                points.push(row);
            }
            Err(_) if lineno == 0 => continue, // header row
            Err(e) => {
                return Err(LfError::Config(format!(
                    "CSV parse error on line {}: {e}",
                    lineno + 1
                )))
            }
        }
    }
    if points.is_empty() {
        return Err(LfError::Config("empty point cloud".to_string()));
    }
    Ok(points)
}
