use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{check_input_width, map_in_chunks, meta_usize, run_epochs, Mlp, TrainConfig};
use crate::autodiff::{Checkpoint, ParamStore, Tape, Tensor};
use crate::error::Result;
use crate::matrix::FeatureMatrix;

/// Autoencoder `D → hidden → latent → hidden → D`; only the encoder is used
/// for reduction.
#[derive(Debug, Clone)]
pub struct AeModel {
    params: ParamStore,
    encoder: Mlp,
    decoder: Mlp,
    input_dim: usize,
    latent_dim: usize,
    loss_history: Vec<f64>,
}

impl AeModel {
    /// Untrained model with seeded Glorot initialisation.
    pub fn new(input_dim: usize, cfg: &TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::init(input_dim, cfg, &mut rng)
    }

    fn init(input_dim: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        let encoder = Mlp::new(
            &mut params,
            "encoder",
            &[input_dim, cfg.hidden_dim, cfg.latent_dim],
            rng,
        )?;
        let decoder = Mlp::new(
            &mut params,
            "decoder",
            &[cfg.latent_dim, cfg.hidden_dim, input_dim],
            rng,
        )?;
        Ok(AeModel {
            params,
            encoder,
            decoder,
            input_dim,
            latent_dim: cfg.latent_dim,
            loss_history: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Per-epoch mean reconstruction loss (squared error summed over features).
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn encode(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_input_width("ae_encode", self.input_dim, data)?;
        map_in_chunks(data, self.latent_dim, |x| {
            let mut tape = Tape::new();
            let p = self.params.bind(&mut tape, false);
            let x = tape.constant(x.clone());
            let z = self.encoder.forward(&mut tape, &p, x)?;
            Ok(tape.value(z).clone())
        })
    }

    pub fn reconstruct(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_input_width("ae_reconstruct", self.input_dim, data)?;
        map_in_chunks(data, self.input_dim, |x| {
            let mut tape = Tape::new();
            let p = self.params.bind(&mut tape, false);
            let x = tape.constant(x.clone());
            let z = self.encoder.forward(&mut tape, &p, x)?;
            let y = self.decoder.forward(&mut tape, &p, z)?;
            Ok(tape.value(y).clone())
        })
    }

    /// Mean squared error per matrix element.
    pub fn reconstruction_mse(&self, data: &FeatureMatrix) -> Result<f64> {
        let rec = self.reconstruct(data)?;
        let sse: f64 = rec
            .data()
            .iter()
            .zip(data.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sse / data.data().len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: "ae".into(),
            meta: json!({
                "input_dim": self.input_dim,
                "latent_dim": self.latent_dim,
                "encoder_depth": self.encoder.layers.len(),
                "decoder_depth": self.decoder.layers.len(),
                "loss_history": self.loss_history,
            }),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind("ae")?;
        let params = ckpt.params.clone();
        let encoder =
            Mlp::from_store(&params, "encoder", meta_usize(&ckpt.meta, "encoder_depth")?)?;
        let decoder =
            Mlp::from_store(&params, "decoder", meta_usize(&ckpt.meta, "decoder_depth")?)?;
        let loss_history =
            serde_json::from_value(ckpt.meta["loss_history"].clone()).unwrap_or_default();
        Ok(AeModel {
            params,
            encoder,
            decoder,
            input_dim: meta_usize(&ckpt.meta, "input_dim")?,
            latent_dim: meta_usize(&ckpt.meta, "latent_dim")?,
            loss_history,
        })
    }
}

/// Trains an autoencoder on `train` by minimising reconstruction error.
pub fn train_autoencoder(train: &FeatureMatrix, cfg: &TrainConfig) -> Result<AeModel> {
    cfg.validate(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = AeModel::init(train.cols(), cfg, &mut rng)?;
    let (encoder, decoder) = (model.encoder.clone(), model.decoder.clone());
    let history = run_epochs(
        "autoencoder",
        &mut model.params,
        train.rows(),
        cfg,
        &mut rng,
        |tape, p, batch, _| {
            let x: Arc<Tensor> = Arc::new(train.select_rows(batch)?.to_tensor());
            let input = tape.constant((*x).clone());
            let z = encoder.forward(tape, p, input)?;
            let y = decoder.forward(tape, p, z)?;
            Ok((tape.squared_error(y, x)?, vec![]))
        },
    )?;
    model.loss_history = history.into_iter().map(|row| row[0]).collect();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn latent_wider_than_input_is_config_error() {
        let train = FeatureMatrix::zeros(200, 4);
        assert!(matches!(
            train_autoencoder(&train, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fewer_rows_than_batch_is_config_error() {
        let train = FeatureMatrix::zeros(100, 10);
        assert!(matches!(
            train_autoencoder(&train, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = AeModel::new(12, &TrainConfig::default()).unwrap();
        let back = AeModel::from_checkpoint(&model.to_checkpoint()).unwrap();
        let data = FeatureMatrix::new(3, 12, (0..36).map(|i| i as f64 / 36.0).collect()).unwrap();
        assert_eq!(model.encode(&data).unwrap(), back.encode(&data).unwrap());
    }
}
