use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassificationReport;
use crate::dimred::ReducerKind;
use crate::error::{Error, Result};
use crate::graph::Metric;

/// One (reducer, k, metric) configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub reducer: ReducerKind,
    pub k: usize,
    pub metric: Metric,
}

impl GridCell {
    /// Directory name used for the cell's artifacts, e.g. `vae_3_euclidean`.
    pub fn dir_name(&self) -> String {
        format!("{}_{}_{}", self.reducer, self.k, self.metric)
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.reducer, self.k, self.metric)
    }
}

/// The neighbourhood settings compared for each reducer.
pub const NEIGHBOR_SETTINGS: [(usize, Metric); 4] = [
    (3, Metric::Euclidean),
    (5, Metric::Euclidean),
    (3, Metric::Cosine),
    (5, Metric::Cosine),
];

/// All twelve cells, reducer-major.
pub fn grid_cells() -> Vec<GridCell> {
    ReducerKind::ALL
        .iter()
        .flat_map(|&reducer| {
            NEIGHBOR_SETTINGS
                .iter()
                .map(move |&(k, metric)| GridCell { reducer, k, metric })
        })
        .collect()
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellResult {
    Report(ClassificationReport),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: GridCell,
    /// `None` when the cell failed.
    pub accuracy: Option<f64>,
    pub f1: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub labels: Vec<String>,
    pub rows: Vec<GridRow>,
    /// Highest-accuracy successful cell; ties go to the earlier cell.
    pub best: Option<GridCell>,
    /// Mean accuracy over successful euclidean and cosine cells.
    pub euclidean_mean_accuracy: Option<f64>,
    pub cosine_mean_accuracy: Option<f64>,
}

/// Tabulates the twelve cells in canonical order.
pub fn grid_report(results: &[(GridCell, CellResult)]) -> Result<GridReport> {
    let cells = grid_cells();
    for (i, (cell, _)) in results.iter().enumerate() {
        if !cells.contains(cell) {
            return Err(Error::Config(format!("{cell} is not a grid configuration")));
        }
        if results[..i].iter().any(|(c, _)| c == cell) {
            return Err(Error::Config(format!("{cell} reported twice")));
        }
    }
    let missing: Vec<String> = cells
        .iter()
        .filter(|c| !results.iter().any(|(r, _)| r == *c))
        .map(ToString::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid { missing });
    }

    let mut labels = Vec::new();
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let (_, result) = results
            .iter()
            .find(|(c, _)| *c == cell)
            .expect("checked complete");
        rows.push(match result {
            CellResult::Report(r) => {
                if labels.is_empty() {
                    labels = r.labels.clone();
                } else if labels != r.labels {
                    return Err(Error::Data(format!("{cell} uses different class labels")));
                }
                GridRow {
                    cell,
                    accuracy: Some(r.accuracy),
                    f1: Some(r.f1.clone()),
                    error: None,
                }
            }
            CellResult::Failed(msg) => GridRow {
                cell,
                accuracy: None,
                f1: None,
                error: Some(msg.clone()),
            },
        });
    }
    let mut best: Option<(GridCell, f64)> = None;
    for row in &rows {
        if let Some(acc) = row.accuracy {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((row.cell, acc));
            }
        }
    }
    let mean_for = |metric: Metric| {
        let accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.cell.metric == metric)
            .filter_map(|r| r.accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    };
    Ok(GridReport {
        labels,
        euclidean_mean_accuracy: mean_for(Metric::Euclidean),
        cosine_mean_accuracy: mean_for(Metric::Cosine),
        best: best.map(|(c, _)| c),
        rows,
    })
}

impl GridReport {
    pub fn failed(&self) -> Vec<GridCell> {
        self.rows
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| r.cell)
            .collect()
    }

    /// `reducer,k,metric,status,accuracy,f1_<label>...,best`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let f1_cols: Vec<String> = self
            .labels
            .iter()
            .map(|l| format!("f1_{}", l.to_lowercase().replace(' ', "_")))
            .collect();
        writeln!(
            w,
            "reducer,k,metric,status,accuracy,{},best",
            f1_cols.join(",")
        )?;
        for row in &self.rows {
            let status = if row.error.is_some() { "failed" } else { "ok" };
            let acc = row.accuracy.map_or(String::new(), |a| a.to_string());
            let f1 = match &row.f1 {
                Some(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
                None => vec![String::new(); self.labels.len()].join(","),
            };
            let best = u8::from(self.best == Some(row.cell));
            writeln!(
                w,
                "{},{},{},{status},{acc},{f1},{best}",
                row.cell.reducer, row.cell.k, row.cell.metric
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{:<5} {:>2} {:<9} {:>8}",
            "model", "k", "metric", "accuracy"
        );
        for l in &self.labels {
            let _ = write!(out, " {:>11}", truncate(l, 11));
        }
        out.push('\n');
        for row in &self.rows {
            let mark = if self.best == Some(row.cell) {
                " <- best"
            } else {
                ""
            };
            let _ = write!(
                out,
                "{:<5} {:>2} {:<9} ",
                row.cell.reducer.to_string(),
                row.cell.k,
                row.cell.metric.to_string()
            );
            match (&row.accuracy, &row.f1, &row.error) {
                (Some(acc), Some(f1), _) => {
                    let _ = write!(out, "{acc:>8.4}");
                    for v in f1 {
                        let _ = write!(out, " {v:>11.4}");
                    }
                }
                (_, _, Some(err)) => {
                    let _ = write!(out, "{:>8} {err}", "FAILED");
                }
                _ => {}
            }
            let _ = writeln!(out, "{mark}");
        }
        if let (Some(e), Some(c)) = (self.euclidean_mean_accuracy, self.cosine_mean_accuracy) {
            let _ = writeln!(out, "\nmean accuracy: euclidean {e:.4}, cosine {c:.4}");
        }
        out
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}
