//! Delta-encoder: learns a low-dimensional code for the difference between
//! two same-class examples and re-applies it to an anchor.
//!
//! Encoder: `[x_i ; x_j] -> 512 leaky-relu (dropout 0.5) -> z (16)`.
//! Decoder: `[z ; x_k] -> 512 leaky-relu (dropout 0.5) -> x_hat`.
//! Training reconstructs `x_i` from `(z, x_j)` under an L1 loss; generation
//! swaps in a target-class anchor `x_k` with dropout off.

use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{cap_per_class, AugmentedBatch, EmbeddingDataset, Method};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::l1;
use crate::nn::{gather_rows, Activation, AdamConfig, AdamState, Gradients, LayerSpec, Mlp, Mode};
use crate::rng::{derive_seed, distinct_pair, rng_from_seed, shuffle};

pub const HIDDEN: usize = 512;
pub const LATENT: usize = 16;
pub const DROPOUT: f64 = 0.5;
const CHECKPOINT_KIND: &str = "delta-encoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaGenStrategy {
    /// Pairs come from a uniformly chosen non-target class.
    DeltaR,
    /// Pairs come from the target class itself.
    DeltaS,
}

impl DeltaGenStrategy {
    pub fn method(self) -> Method {
        match self {
            DeltaGenStrategy::DeltaR => Method::DeltaR,
            DeltaGenStrategy::DeltaS => Method::DeltaS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Pairs drawn per class per epoch; `None` uses the class size.
    pub pairs_per_class_per_epoch: Option<usize>,
    pub seed: u64,
    /// Train on at most this many rows per label.
    pub max_rows_per_class: Option<usize>,
}

impl Default for DeltaTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            batch_size: 64,
            pairs_per_class_per_epoch: None,
            seed: 0,
            max_rows_per_class: None,
        }
    }
}

impl DeltaTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("delta.lr must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("delta.epochs and delta.batch_size must be >= 1".into()));
        }
        if self.pairs_per_class_per_epoch == Some(0) || self.max_rows_per_class == Some(0) {
            return Err(Error::Config("delta pair and row limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEncoderModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct DeltaStep {
    pub loss: f64,
    pub encoder: Gradients,
    pub decoder: Gradients,
}

impl DeltaStep {
    /// Gradients flattened like the model's `param_vector`.
    pub fn grad_vector(&self) -> Vec<f64> {
        self.encoder.slices().into_iter().chain(self.decoder.slices()).flatten().copied().collect()
    }
}

impl DeltaEncoderModel {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("delta-encoder needs a positive dim".into()));
        }
        let mut rng = rng_from_seed(seed);
        let encoder = Mlp::new(
            &[
                LayerSpec { inputs: 2 * dim, outputs: HIDDEN, activation: Activation::LeakyRelu02, dropout: DROPOUT },
                LayerSpec { inputs: HIDDEN, outputs: LATENT, activation: Activation::Identity, dropout: 0.0 },
            ],
            &mut rng,
        )?;
        let decoder = Mlp::new(
            &[
                LayerSpec { inputs: LATENT + dim, outputs: HIDDEN, activation: Activation::LeakyRelu02, dropout: DROPOUT },
                LayerSpec { inputs: HIDDEN, outputs: dim, activation: Activation::Identity, dropout: 0.0 },
            ],
            &mut rng,
        )?;
        Ok(Self { encoder, decoder, dim })
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

    /// L1 reconstruction of `x_i` from `encode(x_i, x_j)` and anchor `x_j`,
    /// with gradients. `dropout_seed = None` runs both nets in eval mode.
    pub fn step(&self, xi: ArrayView2<f64>, xj: ArrayView2<f64>, dropout_seed: Option<u64>) -> Result<DeltaStep> {
        let (enc_mode, dec_mode) = match dropout_seed {
            Some(seed) => (
                Mode::Train(derive_seed(seed, "delta-enc", 0)),
                Mode::Train(derive_seed(seed, "delta-dec", 0)),
            ),
            None => (Mode::Eval, Mode::Eval),
        };
        let enc_in = concatenate![Axis(1), xi, xj];
        let (z, enc_cache) = self.encoder.forward_batch(enc_in.view(), enc_mode)?;
        let dec_in = concatenate![Axis(1), z, xj];
        let (x_hat, dec_cache) = self.decoder.forward_batch(dec_in.view(), dec_mode)?;
        let (loss, d_xhat) = l1(x_hat.view(), xi);
        let decoder = self.decoder.backward(&dec_cache, d_xhat.view())?;
        let dz = decoder.input.slice(s![.., ..LATENT]).to_owned();
        let encoder = self.encoder.backward(&enc_cache, dz.view())?;
        Ok(DeltaStep { loss, encoder, decoder })
    }

    /// Applies the deltas `(x_i, x_j)` to `anchors`, dropout-free.
    pub fn apply(&self, xi: ArrayView2<f64>, xj: ArrayView2<f64>, anchors: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.encoder.predict(concatenate![Axis(1), xi, xj].view(), Mode::Eval)?;
        self.decoder.predict(concatenate![Axis(1), z, anchors].view(), Mode::Eval)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND)
            .with_meta("dim", self.dim)
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
        };
        if ck.meta_parse::<usize>("latent")? != LATENT
            || model.encoder.input_dim() != 2 * model.dim
            || model.encoder.output_dim() != LATENT
            || model.decoder.input_dim() != LATENT + model.dim
            || model.decoder.output_dim() != model.dim
        {
            return Err(Error::Shape("delta-encoder checkpoint shapes are inconsistent".into()));
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

/// Ordered same-class index pairs for one epoch.
fn epoch_pairs(groups: &[Vec<usize>], per_class: Option<usize>, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rng_from_seed(seed);
    let mut pairs = Vec::new();
    for rows in groups {
        let count = per_class.unwrap_or(rows.len());
        for _ in 0..count {
            let (a, b) = distinct_pair(rows.len(), &mut rng);
            pairs.push((rows[a], rows[b]));
        }
    }
    shuffle(&mut pairs, &mut rng);
    pairs
}

/// Row indices per label, keeping only labels with at least two rows.
fn pairable_groups(ds: &EmbeddingDataset) -> Vec<Vec<usize>> {
    (0..ds.num_classes())
        .filter_map(|label| {
            let rows = ds.indices_of(label);
            match rows.len() {
                0 => None,
                1 => {
                    log::warn!(
                        "delta-encoder: label `{}` has a single example and contributes no pairs",
                        ds.vocab().name(label).unwrap_or("?")
                    );
                    None
                }
                _ => Some(rows),
            }
        })
        .collect()
}

/// Trains on same-class pairs; returns the model and the epoch-mean L1.
pub fn train_delta(ds: &EmbeddingDataset, cfg: &DeltaTrainConfig) -> Result<(DeltaEncoderModel, Vec<f64>)> {
    cfg.validate()?;
    let data = cap_per_class(ds, cfg.max_rows_per_class, derive_seed(cfg.seed, "delta-cap", 0));
    let groups = pairable_groups(&data);
    if groups.is_empty() {
        return Err(Error::InsufficientData(
            "delta-encoder needs a class with at least 2 examples".into(),
        ));
    }
    let mut model = DeltaEncoderModel::new(data.dim(), derive_seed(cfg.seed, "delta-init", 0))?;
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &model.param_sizes());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step_index = 0u64;
    for epoch in 0..cfg.epochs {
        let pairs = epoch_pairs(
            &groups,
            cfg.pairs_per_class_per_epoch,
            derive_seed(cfg.seed, "delta-pairs", epoch as u64),
        );
        let mut sum = 0.0;
        for chunk in pairs.chunks(cfg.batch_size) {
            let (is, js): (Vec<usize>, Vec<usize>) = chunk.iter().copied().unzip();
            let xi = gather_rows(data.values(), data.dim(), &is);
            let xj = gather_rows(data.values(), data.dim(), &js);
            let st = model.step(xi.view(), xj.view(), Some(derive_seed(cfg.seed, "delta-dropout", step_index)))?;
            step_index += 1;
            if !st.loss.is_finite() {
                return Err(Error::NonFinite(format!("delta-encoder loss at epoch {}", epoch + 1)));
            }
            sum += st.loss * chunk.len() as f64;
            let mut grads = st.encoder.slices();
            grads.extend(st.decoder.slices());
            let mut params = model.encoder.params_mut();
            params.extend(model.decoder.params_mut());
            adam.step(&mut params, &grads)?;
        }
        let mean = sum / pairs.len() as f64;
        log::debug!("delta epoch {}: l1 {mean}", epoch + 1);
        trace.push(mean);
    }
    Ok((model, trace))
}

/// Generates `n` target-label vectors by applying sampled deltas to
/// round-robin target anchors.
pub fn generate_delta(
    model: &DeltaEncoderModel,
    ds: &EmbeddingDataset,
    target: usize,
    n: usize,
    strategy: DeltaGenStrategy,
    seed: u64,
) -> Result<AugmentedBatch> {
    ds.vocab().check(target)?;
    if ds.dim() != model.dim {
        return Err(Error::DimMismatch {
            context: "delta-encoder generation".into(),
            expected: model.dim,
            found: ds.dim(),
        });
    }
    let anchors = ds.indices_of(target);
    if anchors.is_empty() {
        return Err(Error::InsufficientData("no target-label example to anchor on".into()));
    }
    let sources: Vec<Vec<usize>> = match strategy {
        DeltaGenStrategy::DeltaS => {
            if anchors.len() < 2 {
                return Err(Error::InsufficientData(
                    "DeltaS needs at least 2 target-label examples".into(),
                ));
            }
            vec![anchors.clone()]
        }
        DeltaGenStrategy::DeltaR => {
            let groups: Vec<Vec<usize>> = (0..ds.num_classes())
                .filter(|&l| l != target)
                .map(|l| ds.indices_of(l))
                .filter(|rows| rows.len() >= 2)
                .collect();
            if groups.is_empty() {
                return Err(Error::InsufficientData(
                    "DeltaR found no source class with at least 2 examples".into(),
                ));
            }
            groups
        }
    };
    let mut batch = AugmentedBatch {
        label: target,
        vectors: Vec::with_capacity(n),
        method: strategy.method(),
        gen_seed: seed,
    };
    if n == 0 {
        return Ok(batch);
    }
    let mut rng = rng_from_seed(seed);
    let mut is = Vec::with_capacity(n);
    let mut js = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = &sources[rng.random_range(0..sources.len())];
        let (a, b) = distinct_pair(rows.len(), &mut rng);
        is.push(rows[a]);
        js.push(rows[b]);
    }
    let ks: Vec<usize> = (0..n).map(|m| anchors[m % anchors.len()]).collect();
    let out = model.apply(
        gather_rows(ds.values(), ds.dim(), &is).view(),
        gather_rows(ds.values(), ds.dim(), &js).view(),
        gather_rows(ds.values(), ds.dim(), &ks).view(),
    )?;
    batch.vectors = out.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::LabelVocab;

    fn ds(counts: &[usize]) -> EmbeddingDataset {
        let names: Vec<String> = (0..counts.len()).map(|i| format!("c{i}")).collect();
        let mut ds = EmbeddingDataset::new(2, LabelVocab::from_names(names).unwrap()).unwrap();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                ds.push(c, &[c as f64 * 3.0 + i as f64 * 0.1, -(c as f64)]).unwrap();
            }
        }
        ds
    }

    #[test]
    fn singleton_class_contributes_no_pairs() {
        let d = ds(&[1, 4]);
        let groups = pairable_groups(&d);
        assert_eq!(groups.len(), 1);
        let pairs = epoch_pairs(&groups, None, 0);
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().all(|(i, j)| i != j && d.label(*i) == 1 && d.label(*j) == 1));
        assert!(train_delta(&ds(&[1, 1]), &DeltaTrainConfig::default()).is_err());
    }

    #[test]
    fn generation_preconditions() {
        let model = DeltaEncoderModel::new(2, 0).unwrap();
        let only_target = ds(&[5, 0]);
        let err = generate_delta(&model, &only_target, 0, 3, DeltaGenStrategy::DeltaR, 1).unwrap_err();
        assert!(err.to_string().contains("source class"), "{err}");
        assert!(generate_delta(&model, &ds(&[1, 4]), 0, 3, DeltaGenStrategy::DeltaS, 1).is_err());
        assert!(generate_delta(&model, &ds(&[0, 4]), 0, 3, DeltaGenStrategy::DeltaR, 1).is_err());
        assert!(generate_delta(&model, &ds(&[1, 4]), 0, 3, DeltaGenStrategy::DeltaR, 1).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let model = DeltaEncoderModel::new(2, 0).unwrap();
        let d = ds(&[4, 5, 3]);
        for strategy in [DeltaGenStrategy::DeltaR, DeltaGenStrategy::DeltaS] {
            let a = generate_delta(&model, &d, 0, 20, strategy, 9).unwrap();
            assert_eq!(a.len(), 20);
            assert_eq!(a.method, strategy.method());
            assert_eq!(a, generate_delta(&model, &d, 0, 20, strategy, 9).unwrap());
        }
    }

    #[test]
    fn short_training_is_deterministic() {
        let cfg = DeltaTrainConfig { epochs: 3, batch_size: 4, seed: 2, ..Default::default() };
        let (m1, t1) = train_delta(&ds(&[4, 5]), &cfg).unwrap();
        let (m2, t2) = train_delta(&ds(&[4, 5]), &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(t1, t2);
        assert_eq!(t1.len(), 3);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = DeltaEncoderModel::new(3, 4).unwrap();
        assert_eq!(DeltaEncoderModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
    }
}
