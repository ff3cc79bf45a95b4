//! CSV ingestion: header row, ISO-8601 date in the first column, numeric
//! columns after it.

use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use ndarray::Array2;

use crate::error::{Error, Result};

/// A parsed table. `values[[row, j]]` belongs to `names[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn parse_date(s: &str) -> bool {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").is_ok()
}

pub fn read_csv_path(path: &Path) -> Result<CsvTable> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file)
}

/// Parse a table. Rows and columns in errors are 1-based file coordinates
/// (the header is row 1).
pub fn read_csv<R: Read>(reader: R) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: header.len().max(1),
            message: "need a date column and at least one numeric column".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = names.len();
    let mut dates: Vec<String> = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 1,
            message: e.to_string(),
        })?;
        if rec.len() != width + 1 {
            return Err(Error::Parse {
                row,
                column: rec.len().min(width + 1).max(1),
                message: format!("expected {} fields, found {}", width + 1, rec.len()),
            });
        }
        let date = &rec[0];
        if !parse_date(date) {
            return Err(Error::Parse {
                row,
                column: 1,
                message: format!("'{date}' is not an ISO-8601 date"),
            });
        }
        if let Some(prev) = dates.last() {
            if date <= prev {
                return Err(Error::Parse {
                    row,
                    column: 1,
                    message: format!("date '{date}' does not follow '{prev}'"),
                });
            }
        }
        dates.push(date.to_string());
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: j + 2,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 2,
                    message: format!("'{field}' is not finite"),
                });
            }
            flat.push(v);
        }
    }
    if dates.is_empty() {
        return Err(Error::EmptyInput("csv has no data rows".into()));
    }
    let values = Array2::from_shape_vec((dates.len(), width), flat)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(CsvTable {
        dates,
        names,
        values,
    })
}
