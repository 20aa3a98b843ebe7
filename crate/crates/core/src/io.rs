//! CSV and JSON files.
//!
//! Datasets are CSV with a header row: feature columns first, then an
//! optional trailing `label` column of non-negative integers. Floats are
//! written in shortest round-trip form so files reload bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Result, SfaError};
use crate::sfa_exact::{Dataset, Mode};

pub const LABEL_COLUMN: &str = "label";

pub fn read_dataset(path: &Path, labels: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let width = headers.len();
    let d = if labels {
        if headers.get(width - 1) != Some(LABEL_COLUMN) {
            return Err(SfaError::Format(format!("last column must be `{LABEL_COLUMN}` when labels are expected")));
        }
        width - 1
    } else {
        width
    };
    if d == 0 {
        return Err(SfaError::Format("dataset has no feature columns".into()));
    }
    let mut values = Vec::new();
    let mut label_values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for k in 0..d {
            let field = &record[k];
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| SfaError::Format(format!("row {}, column {}: `{field}` is not a number", line + 1, k + 1)))?;
            if !v.is_finite() {
                return Err(SfaError::Format(format!("row {}, column {}: value is not finite", line + 1, k + 1)));
            }
            values.push(v);
        }
        if labels {
            let field = &record[d];
            let l: usize = field
                .trim()
                .parse()
                .map_err(|_| SfaError::Format(format!("row {}: label `{field}` is not a class index", line + 1)))?;
            label_values.push(l);
        }
    }
    let n = values.len() / d;
    if n == 0 {
        return Err(SfaError::Format("dataset has no rows".into()));
    }
    let x = DMatrix::from_row_slice(n, d, &values);
    if labels {
        Dataset::classification(x, label_values)
    } else {
        Ok(Dataset::time_series(x))
    }
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let labels = match ds.mode {
        Mode::Classification => ds.labels.as_deref(),
        Mode::TimeSeries => None,
    };
    write_matrix(path, &ds.x, "x", labels)
}

/// Matrix as CSV with columns `{prefix}0, {prefix}1, ..` and an optional
/// label column.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, prefix: &str, labels: Option<&[usize]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    if labels.is_some() {
        header.push(LABEL_COLUMN.into());
    }
    w.write_record(&header)?;
    for i in 0..m.nrows() {
        let mut row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        if let Some(l) = labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}
