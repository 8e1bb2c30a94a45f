use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Per-column min-max scaler onto `[0, 1]`.
///
/// Fit only ever sees the matrix it is handed, so callers pass train rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &FeatureMatrix) -> Result<Self> {
        if train.rows() == 0 {
            return Err(Error::Data("cannot fit a scaler on zero rows".into()));
        }
        let mut min = vec![f64::INFINITY; train.cols()];
        let mut max = vec![f64::NEG_INFINITY; train.cols()];
        for row in train.iter_rows() {
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        Ok(Scaler { min, max })
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    /// Maps each column through `(x − min)/(max − min)`, clamped to `[0, 1]`.
    /// Constant columns map to 0.
    pub fn apply(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.min.is_empty() {
            return Err(Error::Contract("scaler applied before being fit".into()));
        }
        if data.cols() != self.min.len() {
            return Err(Error::dim(
                "apply_scaler",
                format!("{} columns", self.min.len()),
                data.cols(),
            ));
        }
        let mut out = data.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let span = self.max[c] - self.min[c];
                *v = if span > 0.0 {
                    ((*v - self.min[c]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

/// Per-column standardisation `(x − mean)/std`, fit on train rows.
///
/// Columns with standard deviation below `1e-12` map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &FeatureMatrix) -> Result<Self> {
        if train.rows() == 0 {
            return Err(Error::Data("cannot fit a scaler on zero rows".into()));
        }
        let n = train.rows() as f64;
        let mut mean = vec![0.0; train.cols()];
        for row in train.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; train.cols()];
        for row in train.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn apply(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.mean.is_empty() {
            return Err(Error::Contract("scaler applied before being fit".into()));
        }
        if data.cols() != self.mean.len() {
            return Err(Error::dim(
                "apply_scaler",
                format!("{} columns", self.mean.len()),
                data.cols(),
            ));
        }
        let mut out = data.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = if self.std[c] > 1e-12 {
                    (*v - self.mean[c]) / self.std[c]
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}
