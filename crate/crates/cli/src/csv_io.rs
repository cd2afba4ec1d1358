//! CSV ingestion and export.
//!
//! Dialect: comma separated, `.` decimal point, header row first. Row numbers
//! in error messages count data rows from 1 (the header is not counted).

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use gpe_core::dataset::Dataset;
use gpe_core::linalg::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },

    #[error("malformed CSV: {0}")]
    Parse(#[from] csv::Error),

    #[error("column not found: `{0}`")]
    ColumnNotFound(String),

    #[error("duplicate column `{0}` in header")]
    DuplicateColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    BadCell { row: usize, column: String, value: String },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("no feature columns")]
    NoFeatures,

    #[error(transparent)]
    Data(#[from] gpe_core::Error),

    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

fn index_of(header: &[String], name: &str) -> Result<usize, CsvError> {
    header.iter().position(|h| h == name).ok_or_else(|| CsvError::ColumnNotFound(name.to_string()))
}

/// Loads `response` and the feature columns from `path`.
///
/// Without `features`, every column other than the response is used, in
/// header order.
pub fn load_csv(path: &Path, response: &str, features: Option<&[String]>) -> Result<Dataset, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Open { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(CsvError::DuplicateColumn(h.clone()));
        }
    }

    let y_col = index_of(&header, response)?;
    let x_cols: Vec<usize> = match features {
        Some(names) => {
            let mut cols = Vec::with_capacity(names.len());
            for name in names {
                let j = index_of(&header, name)?;
                if cols.contains(&j) {
                    return Err(CsvError::DuplicateColumn(name.clone()));
                }
                cols.push(j);
            }
            cols
        }
        None => (0..header.len()).filter(|&j| j != y_col).collect(),
    };
    if x_cols.is_empty() {
        return Err(CsvError::NoFeatures);
    }

    let mut y = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); x_cols.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(CsvError::RaggedRow { row, expected: header.len(), found: record.len() });
        }
        let cell = |j: usize| -> Result<f64, CsvError> {
            let raw = &record[j];
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| CsvError::BadCell {
                row,
                column: header[j].clone(),
                value: raw.to_string(),
            })
        };
        y.push(cell(y_col)?);
        for (col, &j) in columns.iter_mut().zip(&x_cols) {
            col.push(cell(j)?);
        }
    }

    let names = x_cols.iter().map(|&j| header[j].clone()).collect();
    Ok(Dataset::new(y, Matrix::from_columns(&columns)?, names)?)
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `dataset` with the response first, under the name `response`.
pub fn write_csv(path: &Path, dataset: &Dataset, response: &str) -> Result<(), CsvError> {
    let mut out = csv::Writer::from_writer(File::create(path)?);
    let mut header = vec![response.to_string()];
    header.extend(dataset.column_names().iter().cloned());
    out.write_record(&header)?;
    let x = dataset.x();
    for i in 0..dataset.n() {
        let mut row = vec![format_f64(dataset.y()[i])];
        row.extend((0..dataset.p()).map(|j| format_f64(x.get(i, j))));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes pre-formatted rows.
pub fn write_rows<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<(), CsvError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}
