use nalgebra::DMatrix;
use serde_json::json;

use super::check_input_width;
use crate::autodiff::{Checkpoint, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Principal component projection fitted on centred training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// Row-major `[n_components × input_dim]`, orthonormal rows.
    components: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
    input_dim: usize,
}

impl PcaModel {
    /// Builds a model from explicit parts. `components` is row-major `[C × D]`.
    pub fn from_parts(
        mean: Vec<f64>,
        components: Vec<f64>,
        explained_variance_ratio: Vec<f64>,
    ) -> Result<Self> {
        let d = mean.len();
        let c = explained_variance_ratio.len();
        if d == 0 || components.len() != c * d {
            return Err(Error::dim(
                "PcaModel::from_parts",
                format!("components [{c}×{d}]"),
                format!("{} values", components.len()),
            ));
        }
        Ok(PcaModel {
            mean,
            components,
            explained_variance_ratio,
            input_dim: d,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_components(&self) -> usize {
        self.explained_variance_ratio.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    /// `(x - mean) · Cᵀ` per row.
    pub fn transform(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_input_width("pca_transform", self.input_dim, data)?;
        let c = self.n_components();
        let mut out = Vec::with_capacity(data.rows() * c);
        let mut centred = vec![0.0; self.input_dim];
        for row in data.iter_rows() {
            for ((dst, x), m) in centred.iter_mut().zip(row).zip(&self.mean) {
                *dst = x - m;
            }
            for i in 0..c {
                out.push(
                    self.component(i)
                        .iter()
                        .zip(&centred)
                        .map(|(a, b)| a * b)
                        .sum(),
                );
            }
        }
        FeatureMatrix::new(data.rows(), c, out)
    }

    /// `z · C + mean` per row.
    pub fn inverse_transform(&self, latent: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_input_width("pca_inverse", self.n_components(), latent)?;
        let d = self.input_dim;
        let mut out = Vec::with_capacity(latent.rows() * d);
        for z in latent.iter_rows() {
            let mut x = self.mean.clone();
            for (i, zi) in z.iter().enumerate() {
                for (xj, cj) in x.iter_mut().zip(self.component(i)) {
                    *xj += zi * cj;
                }
            }
            out.extend(x);
        }
        FeatureMatrix::new(latent.rows(), d, out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut params = ParamStore::new();
        params.add("mean", Tensor::vector(self.mean.clone()));
        params.add(
            "components",
            Tensor::new(
                vec![self.n_components(), self.input_dim],
                self.components.clone(),
            )
            .expect("consistent shape"),
        );
        params.add(
            "explained_variance_ratio",
            Tensor::vector(self.explained_variance_ratio.clone()),
        );
        Checkpoint {
            kind: "pca".into(),
            meta: json!({ "input_dim": self.input_dim, "n_components": self.n_components() }),
            params,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind("pca")?;
        PcaModel::from_parts(
            ckpt.param("mean")?.data().to_vec(),
            ckpt.param("components")?.data().to_vec(),
            ckpt.param("explained_variance_ratio")?.data().to_vec(),
        )
    }
}

/// Fits PCA via a thin SVD of the centred training matrix.
///
/// Components are ordered by decreasing singular value; each is sign-fixed so
/// its largest-magnitude entry is positive.
pub fn fit_pca(train: &FeatureMatrix, n_components: usize) -> Result<PcaModel> {
    let (n, d) = (train.rows(), train.cols());
    let max_c = n.saturating_sub(1).min(d);
    if n_components == 0 || n_components > max_c {
        return Err(Error::Config(format!(
            "cannot extract {n_components} components from {n} rows × {d} columns (at most {max_c})"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in train.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |r, c| train.get(r, c) - mean[c]);
    let svd = centred.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut components = Vec::with_capacity(n_components * d);
    let mut ratios = Vec::with_capacity(n_components);
    for &i in order.iter().take(n_components) {
        let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
        let pivot = v.iter().copied().fold(
            0.0_f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.extend(v);
        let s = svd.singular_values[i];
        ratios.push(if total > 0.0 { s * s / total } else { 0.0 });
    }
    PcaModel::from_parts(mean, components, ratios)
}
