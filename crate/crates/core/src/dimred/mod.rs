//! Interchangeable reducers mapping D-dimensional flow features to a small
//! latent space: autoencoder encoder, variational autoencoder encoder (posterior
//! mean), and PCA.

mod ae;
mod pca;
mod vae;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ae::{train_autoencoder, AeModel};
pub use pca::{fit_pca, PcaModel};
pub use vae::{train_vae, VaeModel, LOGVAR_CLAMP};

use crate::autodiff::{
    AdamState, BoundParams, Checkpoint, DenseLayer, ParamStore, Tape, Tensor, Var,
};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub const DEFAULT_LATENT_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerKind {
    Ae,
    Vae,
    Pca,
}

impl ReducerKind {
    pub const ALL: [ReducerKind; 3] = [ReducerKind::Ae, ReducerKind::Vae, ReducerKind::Pca];
}

impl fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReducerKind::Ae => "ae",
            ReducerKind::Vae => "vae",
            ReducerKind::Pca => "pca",
        })
    }
}

impl FromStr for ReducerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ae" | "ae-encoder" | "autoencoder" => Ok(ReducerKind::Ae),
            "vae" | "vae-encoder" => Ok(ReducerKind::Vae),
            "pca" => Ok(ReducerKind::Pca),
            other => Err(Error::Config(format!(
                "unknown reducer `{other}` (expected ae, vae or pca)"
            ))),
        }
    }
}

/// Training settings shared by the neural reducers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    /// Test hook: replace the VAE's reparameterisation noise with zeros.
    pub zero_noise: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            lr: 0.001,
            seed: 0,
            latent_dim: DEFAULT_LATENT_DIM,
            hidden_dim: 32,
            zero_noise: false,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self, train: &FeatureMatrix) -> Result<()> {
        if self.latent_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "latent, hidden and batch sizes must be positive".into(),
            ));
        }
        if train.cols() < self.latent_dim {
            return Err(Error::Config(format!(
                "latent width {} exceeds input width {}",
                self.latent_dim,
                train.cols()
            )));
        }
        if train.rows() < self.batch_size {
            return Err(Error::Config(format!(
                "need at least one full batch: {} rows < batch size {}",
                train.rows(),
                self.batch_size
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and ≥ 0, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Stack of dense layers with ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    pub fn from_store(store: &ParamStore, name: &str, depth: usize) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| DenseLayer::from_store(store, &format!("{name}.{i}")))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    pub fn forward(&self, tape: &mut Tape, params: &BoundParams, mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, params, x)?;
            if i < last {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }
}

/// Mini-batch Adam loop shared by the AE and VAE.
///
/// `batch_loss` returns the scalar loss and any extra scalar terms to log;
/// the result holds one row per epoch of `[loss, terms...]`, each averaged
/// over instances.
pub(crate) fn run_epochs<R, F>(
    model: &'static str,
    store: &mut ParamStore,
    n_rows: usize,
    cfg: &TrainConfig,
    rng: &mut R,
    mut batch_loss: F,
) -> Result<Vec<Vec<f64>>>
where
    R: Rng,
    F: FnMut(&mut Tape, &BoundParams, &[usize], &mut R) -> Result<(Var, Vec<Var>)>,
{
    let mut adam = AdamState::new(store, cfg.lr);
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut sums: Vec<f64> = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape, true);
            let (loss, terms) = batch_loss(&mut tape, &bound, batch, rng)?;
            let values: Vec<f64> = std::iter::once(loss)
                .chain(terms)
                .map(|v| tape.value(v).data()[0])
                .collect();
            if !values.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLoss { model, epoch });
            }
            if sums.is_empty() {
                sums = vec![0.0; values.len()];
            }
            for (s, v) in sums.iter_mut().zip(&values) {
                *s += v * batch.len() as f64;
            }
            let mut grads = tape.backward(loss)?;
            let grads = bound.collect(store, &mut grads);
            adam.step(store, &grads)?;
        }
        history.push(sums.into_iter().map(|s| s / n_rows as f64).collect());
    }
    Ok(history)
}

/// Runs `f` over row chunks so inference on large corpora stays bounded in memory.
pub(crate) fn map_in_chunks(
    data: &FeatureMatrix,
    out_cols: usize,
    mut f: impl FnMut(&Tensor) -> Result<Tensor>,
) -> Result<FeatureMatrix> {
    const CHUNK: usize = 4096;
    let mut out = Vec::with_capacity(data.rows() * out_cols);
    let ids: Vec<usize> = (0..data.rows()).collect();
    for chunk in ids.chunks(CHUNK) {
        let t = data.select_rows(chunk)?.to_tensor();
        out.extend_from_slice(f(&t)?.data());
    }
    FeatureMatrix::new(data.rows(), out_cols, out)
}

/// A fitted reducer of any kind.
#[derive(Debug, Clone)]
pub enum Reducer {
    Ae(AeModel),
    Vae(VaeModel),
    Pca(PcaModel),
}

impl Reducer {
    pub fn fit(kind: ReducerKind, train: &FeatureMatrix, cfg: &TrainConfig) -> Result<Self> {
        Ok(match kind {
            ReducerKind::Ae => Reducer::Ae(train_autoencoder(train, cfg)?),
            ReducerKind::Vae => Reducer::Vae(train_vae(train, cfg)?),
            ReducerKind::Pca => Reducer::Pca(fit_pca(train, cfg.latent_dim)?),
        })
    }

    pub fn kind(&self) -> ReducerKind {
        match self {
            Reducer::Ae(_) => ReducerKind::Ae,
            Reducer::Vae(_) => ReducerKind::Vae,
            Reducer::Pca(_) => ReducerKind::Pca,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Reducer::Ae(m) => m.input_dim(),
            Reducer::Vae(m) => m.input_dim(),
            Reducer::Pca(m) => m.input_dim(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Reducer::Ae(m) => m.latent_dim(),
            Reducer::Vae(m) => m.latent_dim(),
            Reducer::Pca(m) => m.n_components(),
        }
    }

    /// Encoder forward for AE, posterior mean for VAE, centred projection for PCA.
    pub fn reduce(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        match self {
            Reducer::Ae(m) => m.encode(data),
            Reducer::Vae(m) => m.encode_mean(data),
            Reducer::Pca(m) => m.transform(data),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Reducer::Ae(m) => m.to_checkpoint(),
            Reducer::Vae(m) => m.to_checkpoint(),
            Reducer::Pca(m) => m.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        match ckpt.kind.as_str() {
            "ae" => Ok(Reducer::Ae(AeModel::from_checkpoint(ckpt)?)),
            "vae" => Ok(Reducer::Vae(VaeModel::from_checkpoint(ckpt)?)),
            "pca" => Ok(Reducer::Pca(PcaModel::from_checkpoint(ckpt)?)),
            other => Err(Error::Data(format!(
                "`{other}` checkpoint is not a reducer"
            ))),
        }
    }
}

pub(crate) fn check_input_width(
    op: &'static str,
    expected: usize,
    data: &FeatureMatrix,
) -> Result<()> {
    if data.cols() != expected {
        return Err(Error::dim(op, format!("{expected} columns"), data.cols()));
    }
    Ok(())
}

pub(crate) fn meta_usize(meta: &serde_json::Value, key: &str) -> Result<usize> {
    meta.get(key)
        .and_then(serde_json::Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Data(format!("checkpoint metadata is missing `{key}`")))
}
