//! CSV input and output of data bundles.

use std::io::Write;
use std::path::Path;

use sketchreg::estimators::DataBundle;
use sketchreg::linalg::Matrix;

use crate::error::{CliError, IngestError};

/// Roles of the CSV columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnMapping {
    pub response: String,
    /// Empty means every column that is neither the response nor an
    /// instrument.
    pub regressors: Vec<String>,
    pub instruments: Vec<String>,
    /// Prepend a column of ones to the regressors and the instruments.
    pub intercept: bool,
}

pub const INTERCEPT_NAME: &str = "(intercept)";

/// A bundle together with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedBundle {
    pub data: DataBundle,
    pub response: String,
    pub regressors: Vec<String>,
    pub instruments: Vec<String>,
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64, IngestError> {
    let t = cell.trim();
    if t.is_empty() {
        return Err(IngestError::ParseError { row, col, message: "empty cell".into() });
    }
    let v: f64 = t.parse().map_err(|_| IngestError::NonNumericCell { row, col, value: t.to_string() })?;
    if !v.is_finite() {
        return Err(IngestError::NonNumericCell { row, col, value: t.to_string() });
    }
    Ok(v)
}

/// Reads a rectangular CSV with a header into a bundle.
pub fn ingest_csv(path: &Path, mapping: &ColumnMapping) -> Result<NamedBundle, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, mapping)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, mapping: &ColumnMapping) -> Result<NamedBundle, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).comment(Some(b'#')).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::ParseError { row: 0, col: 0, message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
    let y_col = find(&mapping.response)?;
    let z_cols = mapping.instruments.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;
    let x_names: Vec<String> = if mapping.regressors.is_empty() {
        header.iter().filter(|h| **h != mapping.response && !mapping.instruments.contains(h)).cloned().collect()
    } else {
        mapping.regressors.clone()
    };
    let x_cols = x_names.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| IngestError::ParseError { row, col: 0, message: e.to_string() })?;
        if rec.len() != header.len() {
            let col = rec.len().min(header.len()) + 1;
            return Err(IngestError::ParseError { row, col, message: format!("expected {} fields, found {}", header.len(), rec.len()) }.into());
        }
        let vals = rec.iter().enumerate().map(|(j, c)| parse_cell(c, row, j + 1)).collect::<Result<Vec<_>, _>>()?;
        rows.push(vals);
    }
    let n = rows.len();
    if n == 0 {
        return Err(IngestError::ParseError { row: 1, col: 1, message: "no data rows".into() }.into());
    }
    let lead = usize::from(mapping.intercept);
    let block = |cols: &[usize]| Matrix::from_fn(n, lead + cols.len(), |i, j| if j < lead { 1.0 } else { rows[i][cols[j - lead]] });
    let y: Vec<f64> = rows.iter().map(|r| r[y_col]).collect();
    let x = block(&x_cols);
    let z = if z_cols.is_empty() { None } else { Some(block(&z_cols)) };
    let with_intercept = |names: &[String]| {
        let mut v = if mapping.intercept { vec![INTERCEPT_NAME.to_string()] } else { Vec::new() };
        v.extend(names.iter().cloned());
        v
    };
    let regressors = with_intercept(&x_names);
    let instruments = if z.is_some() { with_intercept(&mapping.instruments) } else { Vec::new() };
    let data = DataBundle::new(y, x, z)?;
    Ok(NamedBundle { data, response: mapping.response.clone(), regressors, instruments })
}

/// Writes the bundle as CSV. Instrument columns already written as
/// regressors are not repeated; with `drop_intercept` the column of ones is
/// left out so that ingesting with the intercept flag restores it.
pub fn write_bundle_csv(out: &mut dyn Write, bundle: &NamedBundle, drop_intercept: bool) -> Result<(), CliError> {
    let skip = |name: &str| drop_intercept && name == INTERCEPT_NAME;
    let mut cols: Vec<(String, Vec<f64>)> = vec![(bundle.response.clone(), bundle.data.y.clone())];
    for (j, name) in bundle.regressors.iter().enumerate() {
        if !skip(name) {
            cols.push((name.clone(), bundle.data.x.column(j)));
        }
    }
    if let Some(z) = &bundle.data.z {
        for (j, name) in bundle.instruments.iter().enumerate() {
            if !skip(name) && !cols.iter().any(|(c, _)| c == name) {
                cols.push((name.clone(), z.column(j)));
            }
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(cols.iter().map(|(n, _)| n.as_str())).map_err(io)?;
    for i in 0..bundle.data.n() {
        w.write_record(cols.iter().map(|(_, v)| v[i].to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}
