use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use super::{check_input_width, map_in_chunks, meta_usize, run_epochs, Mlp, TrainConfig};
use crate::autodiff::{BoundParams, Checkpoint, DenseLayer, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Log-variance outputs are clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]` before `exp`.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Variational autoencoder with a shared encoder trunk, separate mean and
/// log-variance heads, and a decoder from the latent sample.
#[derive(Debug, Clone)]
pub struct VaeModel {
    params: ParamStore,
    trunk: Mlp,
    mu_head: DenseLayer,
    logvar_head: DenseLayer,
    decoder: Mlp,
    input_dim: usize,
    latent_dim: usize,
    elbo_history: Vec<f64>,
    recon_history: Vec<f64>,
    kl_history: Vec<f64>,
}

/// Scalar loss terms of one forward pass, averaged over rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

struct Terms {
    total: Var,
    recon: Var,
    kl: Var,
    z: Var,
}

impl VaeModel {
    pub fn new(input_dim: usize, cfg: &TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::init(input_dim, cfg, &mut rng)
    }

    fn init(input_dim: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        let trunk = Mlp::new(&mut params, "trunk", &[input_dim, cfg.hidden_dim], rng)?;
        let mu_head = DenseLayer::new(&mut params, "mu_head", cfg.hidden_dim, cfg.latent_dim, rng)?;
        let logvar_head = DenseLayer::new(
            &mut params,
            "logvar_head",
            cfg.hidden_dim,
            cfg.latent_dim,
            rng,
        )?;
        let decoder = Mlp::new(
            &mut params,
            "decoder",
            &[cfg.latent_dim, cfg.hidden_dim, input_dim],
            rng,
        )?;
        Ok(VaeModel {
            params,
            trunk,
            mu_head,
            logvar_head,
            decoder,
            input_dim,
            latent_dim: cfg.latent_dim,
            elbo_history: Vec::new(),
            recon_history: Vec::new(),
            kl_history: Vec::new(),
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

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Per-epoch mean total loss (reconstruction + KL), i.e. the negative ELBO estimate.
    pub fn elbo_history(&self) -> &[f64] {
        &self.elbo_history
    }

    pub fn recon_history(&self) -> &[f64] {
        &self.recon_history
    }

    pub fn kl_history(&self) -> &[f64] {
        &self.kl_history
    }

    fn encoder_heads(&self, tape: &mut Tape, p: &BoundParams, input: Var) -> Result<(Var, Var)> {
        let h = self.trunk.forward(tape, p, input)?;
        let h = tape.relu(h)?;
        let mu = self.mu_head.forward(tape, p, h)?;
        let raw = self.logvar_head.forward(tape, p, h)?;
        let logvar = tape.clamp(raw, -LOGVAR_CLAMP, LOGVAR_CLAMP);
        Ok((mu, logvar))
    }

    /// Full objective. `eps = None` means zero noise, so `z = mu`.
    fn terms(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        x: Arc<Tensor>,
        eps: Option<Tensor>,
    ) -> Result<Terms> {
        let input = tape.constant((*x).clone());
        let (mu, logvar) = self.encoder_heads(tape, p, input)?;
        let z = match eps {
            Some(e) => {
                let half = tape.scale(logvar, 0.5);
                let std = tape.exp(half);
                let noise = tape.constant(e);
                let spread = tape.mul(std, noise)?;
                tape.add(mu, spread)?
            }
            None => mu,
        };
        let y = self.decoder.forward(tape, p, z)?;
        let recon = tape.squared_error(y, x)?;
        let kl = tape.kl_standard_normal(mu, logvar)?;
        let total = tape.add(recon, kl)?;
        Ok(Terms {
            total,
            recon,
            kl,
            z,
        })
    }

    fn check_eps(&self, rows: usize, eps: Option<&Tensor>) -> Result<()> {
        match eps {
            Some(e) if e.shape() != [rows, self.latent_dim] => Err(Error::dim(
                "vae_noise",
                format!("[{rows}×{}]", self.latent_dim),
                format!("{:?}", e.shape()),
            )),
            _ => Ok(()),
        }
    }

    /// Evaluates the loss terms on `data` with explicit noise (`None` = zero noise).
    pub fn loss(&self, data: &FeatureMatrix, eps: Option<&Tensor>) -> Result<VaeLoss> {
        check_input_width("vae_loss", self.input_dim, data)?;
        self.check_eps(data.rows(), eps)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let t = self.terms(&mut tape, &p, Arc::new(data.to_tensor()), eps.cloned())?;
        let v = |x: Var| tape.value(x).data()[0];
        Ok(VaeLoss {
            total: v(t.total),
            reconstruction: v(t.recon),
            kl: v(t.kl),
        })
    }

    /// Reparameterised latent sample `mu + exp(logvar/2)·eps` (`None` = zero noise).
    pub fn sample_latent(
        &self,
        data: &FeatureMatrix,
        eps: Option<&Tensor>,
    ) -> Result<FeatureMatrix> {
        check_input_width("vae_sample", self.input_dim, data)?;
        self.check_eps(data.rows(), eps)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let t = self.terms(&mut tape, &p, Arc::new(data.to_tensor()), eps.cloned())?;
        FeatureMatrix::from_tensor(tape.value(t.z))
    }

    /// Posterior mean of each row; no sampling.
    pub fn encode_mean(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_input_width("vae_encode", self.input_dim, data)?;
        map_in_chunks(data, self.latent_dim, |x| {
            let mut tape = Tape::new();
            let p = self.params.bind(&mut tape, false);
            let input = tape.constant(x.clone());
            let (mu, _) = self.encoder_heads(&mut tape, &p, input)?;
            Ok(tape.value(mu).clone())
        })
    }

    /// Decoder output for latent rows.
    pub fn decode(&self, latent: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_input_width("vae_decode", self.latent_dim, latent)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let z = tape.constant(latent.to_tensor());
        let y = self.decoder.forward(&mut tape, &p, z)?;
        FeatureMatrix::from_tensor(tape.value(y))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: "vae".into(),
            meta: json!({
                "input_dim": self.input_dim,
                "latent_dim": self.latent_dim,
                "trunk_depth": self.trunk.layers.len(),
                "decoder_depth": self.decoder.layers.len(),
                "logvar_clamp": LOGVAR_CLAMP,
                "elbo_history": self.elbo_history,
                "recon_history": self.recon_history,
                "kl_history": self.kl_history,
            }),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind("vae")?;
        let params = ckpt.params.clone();
        let history =
            |key: &str| serde_json::from_value(ckpt.meta[key].clone()).unwrap_or_default();
        Ok(VaeModel {
            trunk: Mlp::from_store(&params, "trunk", meta_usize(&ckpt.meta, "trunk_depth")?)?,
            mu_head: DenseLayer::from_store(&params, "mu_head")?,
            logvar_head: DenseLayer::from_store(&params, "logvar_head")?,
            decoder: Mlp::from_store(&params, "decoder", meta_usize(&ckpt.meta, "decoder_depth")?)?,
            input_dim: meta_usize(&ckpt.meta, "input_dim")?,
            latent_dim: meta_usize(&ckpt.meta, "latent_dim")?,
            elbo_history: history("elbo_history"),
            recon_history: history("recon_history"),
            kl_history: history("kl_history"),
            params,
        })
    }
}

/// Trains a VAE by minimising reconstruction error plus the KL term, with
/// reparameterised sampling `z = mu + exp(logvar/2)·ε`, `ε ~ N(0, I)`.
pub fn train_vae(train: &FeatureMatrix, cfg: &TrainConfig) -> Result<VaeModel> {
    cfg.validate(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = VaeModel::init(train.cols(), cfg, &mut rng)?;
    let shape = model.clone();
    let latent = cfg.latent_dim;
    let history = run_epochs(
        "vae",
        &mut model.params,
        train.rows(),
        cfg,
        &mut rng,
        |tape, p, batch, rng| {
            let x = Arc::new(train.select_rows(batch)?.to_tensor());
            let eps = if cfg.zero_noise {
                None
            } else {
                let noise = (0..batch.len() * latent)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Some(Tensor::matrix(batch.len(), latent, noise)?)
            };
            let t = shape.terms(tape, p, x, eps)?;
            Ok((t.total, vec![t.recon, t.kl]))
        },
    )?;
    for row in history {
        model.elbo_history.push(row[0]);
        model.recon_history.push(row[1]);
        model.kl_history.push(row[2]);
    }
    Ok(model)
}
