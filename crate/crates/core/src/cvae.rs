//! Conditional variational autoencoder over embedding vectors.
//!
//! Encoder: `[x ; onehot(y)] -> 2048 tanh -> (mu, logvar)` with a 128-wide
//! latent. Decoder: `[z ; onehot(y)] -> 2048 tanh -> x_hat` (identity output).
//! Training minimizes the batch mean of `||x_hat - x||^2 + beta * KL`.

use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::{cap_per_class, AugmentedBatch, EmbeddingDataset, Method};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::{kl_batch, mse, normal_matrix};
use crate::nn::{gather_rows, Activation, AdamConfig, AdamState, Gradients, LayerSpec, Mlp, Mode};
use crate::rng::{derive_seed, rng_from_seed, shuffle};

pub const HIDDEN: usize = 2048;
pub const LATENT: usize = 128;
const CHECKPOINT_KIND: &str = "cvae";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvaeTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the KL term.
    pub kl_weight: f64,
    pub seed: u64,
    /// Train on at most this many rows per label.
    pub max_rows_per_class: Option<usize>,
}

impl Default for CvaeTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            batch_size: 64,
            kl_weight: 1.0,
            seed: 0,
            max_rows_per_class: None,
        }
    }
}

impl CvaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("cvae.lr must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("cvae.epochs and cvae.batch_size must be >= 1".into()));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return Err(Error::Config("cvae.kl_weight must be >= 0".into()));
        }
        if self.max_rows_per_class == Some(0) {
            return Err(Error::Config("cvae.max_rows_per_class must be positive".into()));
        }
        Ok(())
    }
}

/// Epoch-averaged loss terms (per example).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvaeEpoch {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub dim: usize,
    pub classes: usize,
}

/// Loss terms and parameter gradients of one minibatch.
#[derive(Debug, Clone)]
pub struct CvaeStep {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub encoder: Gradients,
    pub decoder: Gradients,
}

impl CvaeStep {
    /// Gradients flattened like the model's `param_vector`.
    pub fn grad_vector(&self) -> Vec<f64> {
        self.encoder.slices().into_iter().chain(self.decoder.slices()).flatten().copied().collect()
    }
}

fn onehot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), classes));
    for (r, &l) in labels.iter().enumerate() {
        m[[r, l]] = 1.0;
    }
    m
}

impl CvaeModel {
    pub fn new(dim: usize, classes: usize, seed: u64) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::Config("cvae needs a positive dim and at least one class".into()));
        }
        let mut rng = rng_from_seed(seed);
        let layer = |inputs, outputs, activation| LayerSpec {
            inputs,
            outputs,
            activation,
            dropout: 0.0,
        };
        let encoder = Mlp::new(
            &[
                layer(dim + classes, HIDDEN, Activation::Tanh),
                layer(HIDDEN, 2 * LATENT, Activation::Identity),
            ],
            &mut rng,
        )?;
        let decoder = Mlp::new(
            &[
                layer(LATENT + classes, HIDDEN, Activation::Tanh),
                layer(HIDDEN, dim, Activation::Identity),
            ],
            &mut rng,
        )?;
        Ok(Self {
            encoder,
            decoder,
            dim,
            classes,
        })
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        let mut v = self.encoder.param_sizes();
        v.extend(self.decoder.param_sizes());
        v
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut v = self.encoder.param_vector();
        v.extend(self.decoder.param_vector());
        v
    }

    pub fn set_param_vector(&mut self, params: &[f64]) -> Result<()> {
        let split = self.encoder.num_params().min(params.len());
        self.encoder.set_param_vector(&params[..split])?;
        self.decoder.set_param_vector(&params[split..])
    }

    /// Loss and gradients for a batch, using the supplied standard-normal
    /// noise `eps` (`batch x LATENT`) in the reparameterization.
    pub fn step(&self, x: ArrayView2<f64>, labels: &[usize], eps: ArrayView2<f64>, kl_weight: f64) -> Result<CvaeStep> {
        let cond = onehot(labels, self.classes);
        let enc_in = concatenate![Axis(1), x, cond];
        let (stats, enc_cache) = self.encoder.forward_batch(enc_in.view(), Mode::Eval)?;
        let mu = stats.slice(s![.., ..LATENT]);
        let logvar = stats.slice(s![.., LATENT..]);
        let std = logvar.mapv(|lv| (0.5 * lv).exp());
        let z = &mu + &(&std * &eps);
        let dec_in = concatenate![Axis(1), z, cond];
        let (x_hat, dec_cache) = self.decoder.forward_batch(dec_in.view(), Mode::Eval)?;

        let (recon, d_xhat) = mse(x_hat.view(), x);
        let (kl, dmu_kl, dlv_kl) = kl_batch(mu, logvar);
        let decoder = self.decoder.backward(&dec_cache, d_xhat.view())?;
        let dz = decoder.input.slice(s![.., ..LATENT]);
        let dmu = &dz + &(dmu_kl * kl_weight);
        let dlv = &(&dz * &eps * &std * 0.5) + &(dlv_kl * kl_weight);
        let d_stats = concatenate![Axis(1), dmu, dlv];
        let encoder = self.encoder.backward(&enc_cache, d_stats.view())?;
        Ok(CvaeStep {
            total: recon + kl_weight * kl,
            reconstruction: recon,
            kl,
            encoder,
            decoder,
        })
    }

    /// Decodes `z` under label conditioning, dropout-free.
    pub fn decode(&self, z: ArrayView2<f64>, label: usize) -> Result<Array2<f64>> {
        let cond = onehot(&vec![label; z.nrows()], self.classes);
        let input = concatenate![Axis(1), z, cond];
        self.decoder.predict(input.view(), Mode::Eval)
    }

    /// Posterior-mean reconstruction of `x` under `label`.
    pub fn reconstruct(&self, x: ArrayView2<f64>, label: usize) -> Result<Array2<f64>> {
        let cond = onehot(&vec![label; x.nrows()], self.classes);
        let stats = self.encoder.predict(concatenate![Axis(1), x, cond].view(), Mode::Eval)?;
        self.decode(stats.slice(s![.., ..LATENT]), label)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND)
            .with_meta("dim", self.dim)
            .with_meta("classes", self.classes)
            .with_meta("latent", LATENT)
            .with_network("encoder", &self.encoder)
            .with_network("decoder", &self.decoder)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let model = Self {
            encoder: ck.network("encoder")?.clone(),
            decoder: ck.network("decoder")?.clone(),
            dim: ck.meta_parse("dim")?,
            classes: ck.meta_parse("classes")?,
        };
        if ck.meta_parse::<usize>("latent")? != LATENT
            || model.encoder.input_dim() != model.dim + model.classes
            || model.encoder.output_dim() != 2 * LATENT
            || model.decoder.input_dim() != LATENT + model.classes
            || model.decoder.output_dim() != model.dim
        {
            return Err(Error::Shape("cvae checkpoint shapes are inconsistent".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Trains a CVAE on every row of `ds` (optionally capped per class).
pub fn train_cvae(ds: &EmbeddingDataset, cfg: &CvaeTrainConfig) -> Result<(CvaeModel, Vec<CvaeEpoch>)> {
    cfg.validate()?;
    let data = cap_per_class(ds, cfg.max_rows_per_class, derive_seed(cfg.seed, "cvae-cap", 0));
    if data.is_empty() {
        return Err(Error::InsufficientData("cvae training set is empty".into()));
    }
    let mut model = CvaeModel::new(data.dim(), data.num_classes(), derive_seed(cfg.seed, "cvae-init", 0))?;
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &model.param_sizes());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step_index = 0u64;
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng_from_seed(derive_seed(cfg.seed, "cvae-shuffle", epoch as u64)));
        let mut sums = CvaeEpoch { total: 0.0, reconstruction: 0.0, kl: 0.0 };
        for chunk in order.chunks(cfg.batch_size) {
            let x = gather_rows(data.values(), data.dim(), chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
            let eps = normal_matrix(chunk.len(), LATENT, derive_seed(cfg.seed, "cvae-eps", step_index));
            step_index += 1;
            let st = model.step(x.view(), &labels, eps.view(), cfg.kl_weight)?;
            if !st.total.is_finite() {
                return Err(Error::NonFinite(format!("cvae loss at epoch {}", epoch + 1)));
            }
            let w = chunk.len() as f64;
            sums.total += st.total * w;
            sums.reconstruction += st.reconstruction * w;
            sums.kl += st.kl * w;
            let mut grads = st.encoder.slices();
            grads.extend(st.decoder.slices());
            let mut params = model.encoder.params_mut();
            params.extend(model.decoder.params_mut());
            adam.step(&mut params, &grads)?;
        }
        let n = data.len() as f64;
        let epoch_stats = CvaeEpoch {
            total: sums.total / n,
            reconstruction: sums.reconstruction / n,
            kl: sums.kl / n,
        };
        log::debug!("cvae epoch {}: {:?}", epoch + 1, epoch_stats);
        trace.push(epoch_stats);
    }
    Ok((model, trace))
}

/// Decodes `n` prior draws `z ~ N(0, I)` conditioned on `label`.
pub fn sample_cvae(model: &CvaeModel, label: usize, n: usize, seed: u64) -> Result<AugmentedBatch> {
    if label >= model.classes {
        return Err(Error::InvalidLabel {
            id: label,
            classes: model.classes,
        });
    }
    let vectors = if n == 0 {
        Vec::new()
    } else {
        let z = normal_matrix(n, LATENT, seed);
        let out = model.decode(z.view(), label)?;
        out.rows().into_iter().map(|r| r.to_vec()).collect()
    };
    Ok(AugmentedBatch {
        label,
        vectors,
        method: Method::Cvae,
        gen_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::LabelVocab;

    fn tiny_ds() -> EmbeddingDataset {
        let vocab = LabelVocab::from_names(["a", "b"]).unwrap();
        let mut ds = EmbeddingDataset::new(3, vocab).unwrap();
        for i in 0..6 {
            ds.push(i % 2, &[i as f64 * 0.1, 1.0, -0.5]).unwrap();
        }
        ds
    }

    #[test]
    fn sampling_shapes_and_determinism() {
        let model = CvaeModel::new(3, 2, 1).unwrap();
        assert!(sample_cvae(&model, 0, 0, 5).unwrap().is_empty());
        let a = sample_cvae(&model, 1, 4, 5).unwrap();
        assert_eq!(a.len(), 4);
        assert!(a.vectors.iter().all(|v| v.len() == 3 && v.iter().all(|x| x.is_finite())));
        assert_eq!(a, sample_cvae(&model, 1, 4, 5).unwrap());
        assert!(sample_cvae(&model, 2, 1, 5).is_err());
    }

    #[test]
    fn zero_kl_weight_ignores_kl_gradient() {
        let model = CvaeModel::new(3, 2, 2).unwrap();
        let ds = tiny_ds();
        let x = gather_rows(ds.values(), 3, &[0, 1]);
        let eps = Array2::zeros((2, LATENT));
        let st = model.step(x.view(), &[0, 1], eps.view(), 0.0).unwrap();
        assert_eq!(st.total, st.reconstruction);
        assert!(st.kl >= 0.0);
    }

    #[test]
    fn short_training_is_deterministic_and_kl_nonnegative() {
        let cfg = CvaeTrainConfig { epochs: 2, batch_size: 4, seed: 3, ..Default::default() };
        let (m1, t1) = train_cvae(&tiny_ds(), &cfg).unwrap();
        let (m2, t2) = train_cvae(&tiny_ds(), &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(t1, t2);
        assert!(t1.iter().all(|e| e.kl >= 0.0));
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        let empty = EmbeddingDataset::new(3, LabelVocab::from_names(["a"]).unwrap()).unwrap();
        assert!(train_cvae(&empty, &CvaeTrainConfig::default()).is_err());
        let bad = CvaeTrainConfig { epochs: 0, ..Default::default() };
        assert!(train_cvae(&tiny_ds(), &bad).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let model = CvaeModel::new(3, 2, 1).unwrap();
        let back = CvaeModel::from_checkpoint(&model.to_checkpoint()).unwrap();
        assert_eq!(back, model);
    }
}
