//! One affine layer plus softmax: the probe trained on real and generated
//! features. Input dropout is applied during training only.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::{softmax, softmax_in_place};
use crate::nn::{Activation, AdamConfig, AdamState, Dense, Mlp};
use crate::par::sum_counts;
use crate::rng::{derive_seed, rng_from_seed, shuffle, SeededRng};

const CHECKPOINT_KIND: &str = "softmax-classifier";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Keep the earliest epoch with the highest dev accuracy.
    #[default]
    BestDevAccuracy,
    LastEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub selection: Selection,
    pub input_dropout: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            selection: Selection::BestDevAccuracy,
            input_dropout: 0.1,
        }
    }
}

impl ClassifierTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("classifier.lr must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "classifier.epochs and classifier.batch_size must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.input_dropout) {
            return Err(Error::Config("classifier.input_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    /// `(classes, dim)`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub input_dropout: f64,
}

/// Accuracy and confusion counts (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl SoftmaxClassifier {
    pub fn zeros(dim: usize, classes: usize, input_dropout: f64) -> Self {
        Self {
            weights: Array2::zeros((classes, dim)),
            bias: Array1::zeros(classes),
            input_dropout,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let w = self.weights.as_slice().expect("contiguous weights");
        let dim = self.dim();
        self.bias
            .iter()
            .enumerate()
            .map(|(c, b)| b + dot(&w[c * dim..(c + 1) * dim], x))
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Argmax of the logits; ties go to the lowest label id.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Mean cross-entropy over `rows` of `ds` and its gradient
    /// `(d_weights, d_bias)`, flattened like the parameters. With a dropout
    /// generator, inputs are masked (inverted dropout) as in training.
    pub fn loss_and_grad(
        &self,
        ds: &EmbeddingDataset,
        rows: &[usize],
        mut dropout: Option<&mut SeededRng>,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let classes = self.classes();
        let w = self.weights.as_slice().expect("contiguous weights");
        let mut gw = vec![0.0; classes * dim];
        let mut gb = vec![0.0; classes];
        let mut x = vec![0.0; dim];
        let mut logits = vec![0.0; classes];
        let mut loss = 0.0;
        let inv = 1.0 / rows.len().max(1) as f64;
        let keep_scale = 1.0 / (1.0 - self.input_dropout);
        for &i in rows {
            x.copy_from_slice(ds.row(i));
            if let Some(rng) = dropout.as_deref_mut() {
                if self.input_dropout > 0.0 {
                    for v in x.iter_mut() {
                        *v = if rng.random::<f64>() >= self.input_dropout { *v * keep_scale } else { 0.0 };
                    }
                }
            }
            for c in 0..classes {
                logits[c] = self.bias[c] + dot(&w[c * dim..(c + 1) * dim], &x);
            }
            softmax_in_place(&mut logits);
            let p = &logits;
            let y = ds.label(i);
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            for c in 0..classes {
                let g = (p[c] - if c == y { 1.0 } else { 0.0 }) * inv;
                gb[c] += g;
                for (gwv, xv) in gw[c * dim..(c + 1) * dim].iter_mut().zip(&x) {
                    *gwv += g * xv;
                }
            }
        }
        (loss * inv, gw, gb)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let layer = Mlp {
            layers: vec![Dense {
                weight: self.weights.clone(),
                bias: self.bias.clone(),
                activation: Activation::Identity,
                dropout: 0.0,
            }],
        };
        Checkpoint::new(CHECKPOINT_KIND)
            .with_meta("input_dropout", crate::dataio::format_f64(self.input_dropout))
            .with_network("linear", &layer)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let net = ck.network("linear")?;
        if net.layers.len() != 1 || net.layers[0].activation != Activation::Identity {
            return Err(Error::Shape("classifier checkpoint must hold one affine layer".into()));
        }
        Ok(Self {
            weights: net.layers[0].weight.clone(),
            bias: net.layers[0].bias.clone(),
            input_dropout: ck.meta_parse("input_dropout")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains with Adam on mean cross-entropy, shuffling every epoch. Returns
/// the selected snapshot and the per-epoch dev accuracy (empty when `dev`
/// is empty).
pub fn train_classifier(
    train: &EmbeddingDataset,
    dev: &EmbeddingDataset,
    cfg: &ClassifierTrainConfig,
) -> Result<(SoftmaxClassifier, Vec<f64>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("classifier training set is empty".into()));
    }
    if dev.is_empty() && cfg.selection == Selection::BestDevAccuracy {
        return Err(Error::InsufficientData(
            "best-dev selection needs a non-empty dev set".into(),
        ));
    }
    if !dev.is_empty() && dev.dim() != train.dim() {
        return Err(Error::DimMismatch {
            context: "classifier dev set".into(),
            expected: train.dim(),
            found: dev.dim(),
        });
    }
    let mut model = SoftmaxClassifier::zeros(train.dim(), train.num_classes(), cfg.input_dropout);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &[model.weights.len(), model.bias.len()]);
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, "classifier-shuffle", 0));
    let mut dropout_rng = rng_from_seed(derive_seed(cfg.seed, "classifier-dropout", 0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, SoftmaxClassifier)> = None;

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, gw, gb) = model.loss_and_grad(train, chunk, Some(&mut dropout_rng));
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss at epoch {}", epoch + 1)));
            }
            let w = model.weights.as_slice_mut().expect("contiguous weights");
            let b = model.bias.as_slice_mut().expect("contiguous bias");
            adam.step(&mut [w, b], &[&gw, &gb])?;
        }
        if !dev.is_empty() {
            let acc = evaluate(&model, dev)?.accuracy;
            trace.push(acc);
            if cfg.selection == Selection::BestDevAccuracy && best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.clone()));
            }
        }
    }
    let chosen = match (cfg.selection, best) {
        (Selection::BestDevAccuracy, Some((_, m))) => m,
        _ => model,
    };
    Ok((chosen, trace))
}

/// Dropout-free accuracy and confusion matrix.
pub fn evaluate(model: &SoftmaxClassifier, ds: &EmbeddingDataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate on an empty dataset".into()));
    }
    if ds.dim() != model.dim() {
        return Err(Error::DimMismatch {
            context: "evaluation data".into(),
            expected: model.dim(),
            found: ds.dim(),
        });
    }
    let classes = model.classes();
    if ds.num_classes() > classes {
        return Err(Error::Config(format!(
            "evaluation data has {} labels, model has {classes}",
            ds.num_classes()
        )));
    }
    let flat = sum_counts(ds.len(), classes * classes, |i| {
        ds.label(i) * classes + model.predict(ds.row(i))
    });
    let confusion: Vec<Vec<u64>> = flat.chunks(classes).map(<[u64]>::to_vec).collect();
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        confusion,
    })
}
