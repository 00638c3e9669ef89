//! Named numeric column table and CSV ingestion.

use std::path::Path;

use crate::error::{ModelError, Result};

/// Rectangular table of named numeric columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(ModelError::Data(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(ModelError::Data("columns have unequal lengths".into()));
            }
        }
        Ok(Dataset { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, index: usize) -> Result<&[f64]> {
        self.columns
            .get(index)
            .map(Vec::as_slice)
            .ok_or(ModelError::ColumnOutOfRange {
                index,
                available: self.columns.len(),
            })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Read a headered, rectangular, all-numeric CSV file.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text)
}

/// Parse CSV text; row numbers in errors are 1-based data rows.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| ModelError::Data(e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(ModelError::Data("empty file".into()));
    }
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    let mut columns = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ModelError::Data(e.to_string()))?;
        if record.len() != names.len() {
            return Err(ModelError::Data(format!(
                "ragged row {}: {} fields, expected {}",
                row + 1,
                record.len(),
                names.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                ModelError::Data(format!(
                    "non-numeric cell {:?} at row {}, column `{}`",
                    field,
                    row + 1,
                    names[col]
                ))
            })?;
            columns[col].push(value);
        }
    }
    if columns[0].is_empty() {
        return Err(ModelError::Data("no data rows".into()));
    }
    Dataset::new(names, columns)
}
