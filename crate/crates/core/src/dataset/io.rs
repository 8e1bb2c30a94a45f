use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::{info, warn};

use super::{FlowDataset, LabelMap};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub label_column: String,
    /// Columns removed before parsing, matched after trimming.
    pub drop_columns: Vec<String>,
    pub label_map: LabelMap,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            label_column: "Label".into(),
            drop_columns: Vec::new(),
            label_map: LabelMap::default(),
        }
    }
}

/// Row and column accounting for one ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_in: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    /// Non-numeric or explicitly dropped columns.
    pub dropped_columns: Vec<String>,
}

/// Reads a CICFlowMeter-style CSV export.
///
/// Columns whose non-empty cells do not all parse as numbers (flow ids, IPs,
/// timestamps) are dropped. Rows with a non-finite or missing value in any
/// kept column are dropped and counted.
pub fn load_netflow_csv(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<(FlowDataset, LoadReport)> {
    let file = File::open(path.as_ref())?;
    let (ds, report) = parse_netflow_csv(BufReader::new(file), opts)?;
    info!(
        "loaded {}: {} rows kept, {} dropped, {} features",
        path.as_ref().display(),
        report.rows_kept,
        report.rows_dropped,
        ds.features.cols()
    );
    Ok((ds, report))
}

pub(crate) fn parse_netflow_csv<R: Read>(
    reader: R,
    opts: &LoadOptions,
) -> Result<(FlowDataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == &opts.label_column)
        .ok_or_else(|| {
            Error::Data(format!(
                "label column `{}` not found in header",
                opts.label_column
            ))
        })?;

    let mut dropped_columns = Vec::new();
    let mut candidates = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == label_idx {
            continue;
        }
        if opts.drop_columns.iter().any(|d| d.trim() == h) {
            dropped_columns.push(h.clone());
        } else {
            candidates.push(i);
        }
    }

    let width = candidates.len();
    let mut numeric = vec![true; width];
    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut line = 1usize;
    while rdr.read_record(&mut record)? {
        line += 1;
        let raw_label = record.get(label_idx).unwrap_or("");
        let label = opts
            .label_map
            .index_of(raw_label)
            .ok_or_else(|| Error::Data(format!("unknown class `{raw_label}` on line {line}")))?;
        labels.push(label);
        for (slot, &col) in candidates.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                match cell.parse::<f64>() {
                    Ok(v) => v,
                    Err(_) => {
                        numeric[slot] = false;
                        f64::NAN
                    }
                }
            };
            values.push(v);
        }
    }
    let rows_in = labels.len();

    let keep: Vec<usize> = (0..width).filter(|&s| numeric[s]).collect();
    for (s, &col) in candidates.iter().enumerate() {
        if !numeric[s] {
            dropped_columns.push(headers[col].clone());
        }
    }
    if !dropped_columns.is_empty() {
        warn!(
            "dropping non-feature columns: {}",
            dropped_columns.join(", ")
        );
    }
    if keep.is_empty() {
        return Err(Error::Data("no numeric feature columns".into()));
    }

    let mut data = Vec::with_capacity(rows_in * keep.len());
    let mut kept_labels = Vec::with_capacity(rows_in);
    for (r, &label) in labels.iter().enumerate() {
        let row = &values[r * width..(r + 1) * width];
        if keep.iter().all(|&s| row[s].is_finite()) {
            data.extend(keep.iter().map(|&s| row[s]));
            kept_labels.push(label);
        }
    }
    let rows_kept = kept_labels.len();
    if rows_kept == 0 {
        return Err(Error::Data("no usable rows after cleaning".into()));
    }
    let report = LoadReport {
        rows_in,
        rows_kept,
        rows_dropped: rows_in - rows_kept,
        dropped_columns,
    };
    let feature_names = keep
        .iter()
        .map(|&s| headers[candidates[s]].clone())
        .collect();
    let ds = FlowDataset::new(
        FeatureMatrix::new(rows_kept, keep.len(), data)?,
        kept_labels,
        opts.label_map.names().to_vec(),
        feature_names,
    )?;
    Ok((ds, report))
}

/// Writes a dataset in the ingestion layout: feature columns, then a label
/// column holding class names. [`load_netflow_csv`] reads it back.
pub fn write_netflow_csv(
    path: impl AsRef<Path>,
    dataset: &FlowDataset,
    label_column: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for (row, &label) in dataset.features.iter_rows().zip(&dataset.labels) {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.push(dataset.label_names[label].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes features plus an integer `label` column.
pub fn write_labeled_csv(
    path: impl AsRef<Path>,
    features: &FeatureMatrix,
    labels: &[usize],
    column_names: &[String],
) -> Result<()> {
    if labels.len() != features.rows() || column_names.len() != features.cols() {
        return Err(Error::dim(
            "write_labeled_csv",
            format!("{} labels and {} names", features.rows(), features.cols()),
            format!("{} and {}", labels.len(), column_names.len()),
        ));
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<&str> = column_names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(features.cols() + 1);
    for (row, label) in features.iter_rows().zip(labels) {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_labeled_csv`]: numeric columns then an integer `label`.
pub fn read_labeled_csv(
    path: impl AsRef<Path>,
) -> Result<(FeatureMatrix, Vec<usize>, Vec<String>)> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.last().map(String::as_str) != Some("label") {
        return Err(Error::Data("last column must be `label`".into()));
    }
    let cols = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        for i in 0..cols {
            let v: f64 = rec[i].parse().map_err(|_| {
                Error::Data(format!(
                    "non-numeric value `{}` in column {}",
                    &rec[i], headers[i]
                ))
            })?;
            data.push(v);
        }
        labels.push(
            rec[cols]
                .parse()
                .map_err(|_| Error::Data(format!("bad label `{}`", &rec[cols])))?,
        );
    }
    let m = FeatureMatrix::new(labels.len(), cols, data)?;
    Ok((m, labels, headers[..cols].to_vec()))
}

const MATRIX_MAGIC: &[u8; 4] = b"FMAT";

/// Binary matrix: magic `FMAT`, `u64` rows, `u64` cols, then row-major `f64`, all little-endian.
pub fn write_matrix_bin(path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_bin(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Data("not a binary feature matrix".into()));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let rows = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let cols = u64::from_le_bytes(b) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut b)?;
        data.push(f64::from_le_bytes(b));
    }
    FeatureMatrix::new(rows, cols, data)
}
