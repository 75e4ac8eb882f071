//! CSV readers and writers for dyad and node files.
//!
//! Dialect: comma separated, UTF-8, mandatory header row, `.` as decimal
//! separator, scientific notation accepted.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{build_dataset, DyadDataset, DyadRecord, NodeTable};

use super::CliError;

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::MissingColumn(name.to_string()))
}

fn parse_number(
    record: &csv::StringRecord,
    idx: usize,
    column: &str,
    row: usize,
) -> Result<f64, CliError> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| CliError::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Column selection for [`load_dyads_csv`].
#[derive(Debug, Clone)]
pub struct DyadColumns {
    pub outcome: String,
    pub regressors: Vec<String>,
    pub ego: String,
    pub alter: String,
}

pub fn load_dyads_csv(
    path: &Path,
    columns: &DyadColumns,
    intercept: bool,
) -> Result<DyadDataset, CliError> {
    read_dyads(open(path)?, columns, intercept)
}

/// Reads a dyad table. Rows are numbered from 1 for the first data row.
/// Node order is order of first appearance (ego before alter).
pub fn read_dyads<R: Read>(
    input: R,
    columns: &DyadColumns,
    intercept: bool,
) -> Result<DyadDataset, CliError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| CliError::Csv(e.to_string()))?.clone();
    let ego_idx = column(&headers, &columns.ego)?;
    let alter_idx = column(&headers, &columns.alter)?;
    let y_idx = column(&headers, &columns.outcome)?;
    let r_idx = columns
        .regressors
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut labels: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| CliError::Parse {
            row,
            column: String::new(),
            value: e.to_string(),
        })?;
        let ego = rec.get(ego_idx).unwrap_or("").to_string();
        let alter = rec.get(alter_idx).unwrap_or("").to_string();
        for label in [&ego, &alter] {
            if seen.insert(label.clone()) {
                labels.push(label.clone());
            }
        }
        let y = parse_number(&rec, y_idx, &columns.outcome, row)?;
        let r = r_idx
            .iter()
            .zip(&columns.regressors)
            .map(|(&i, name)| parse_number(&rec, i, name, row))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(DyadRecord { ego, alter, y, r });
    }

    let dataset = build_dataset(labels, columns.regressors.clone(), records)?;
    Ok(if intercept {
        dataset.with_intercept()
    } else {
        dataset
    })
}

/// Reads a node attribute table; every column other than `label_col` must be
/// numeric.
pub fn load_nodes_csv(path: &Path, label_col: Option<&str>) -> Result<NodeTable, CliError> {
    read_nodes(open(path)?, label_col)
}

pub fn read_nodes<R: Read>(input: R, label_col: Option<&str>) -> Result<NodeTable, CliError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| CliError::Csv(e.to_string()))?.clone();
    let label_idx = match label_col {
        Some(name) => column(&headers, name)?,
        None => 0,
    };
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut table = NodeTable::new(value_cols.iter().map(|(_, h)| h.clone()).collect());
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| CliError::Parse {
            row,
            column: String::new(),
            value: e.to_string(),
        })?;
        let label = rec.get(label_idx).unwrap_or("").to_string();
        let values = value_cols
            .iter()
            .map(|(i, h)| parse_number(&rec, *i, h, row))
            .collect::<Result<Vec<_>, _>>()?;
        table.insert(label, values)?;
    }
    Ok(table)
}

/// Writes `ego,alter,y,<regressors...>` rows in lexicographic index order.
pub fn write_dyads_csv<W: Write>(dataset: &DyadDataset, out: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["ego".to_string(), "alter".to_string(), "y".to_string()];
    header.extend(dataset.regressor_names().iter().cloned());
    wtr.write_record(&header)
        .map_err(|e| CliError::Csv(e.to_string()))?;
    for rec in dataset.records() {
        let mut row = vec![rec.ego, rec.alter, rec.y.to_string()];
        row.extend(rec.r.iter().map(f64::to_string));
        wtr.write_record(&row)
            .map_err(|e| CliError::Csv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| CliError::Csv(e.to_string()))?;
    Ok(())
}
