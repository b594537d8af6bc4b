//! Losses. Reduction is the mean over the batch and the sum over feature
//! dimensions; every function returns the loss and its gradient with respect
//! to the prediction.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Mse,
    L1,
    CrossEntropy,
    GaussianKl,
}

pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let batch = pred.nrows().max(1) as f64;
    let diff = &pred - &target;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / batch;
    (value, diff * (2.0 / batch))
}

/// L1 with the subgradient 0 at exact ties.
pub fn l1(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let batch = pred.nrows().max(1) as f64;
    let diff = &pred - &target;
    let value = diff.iter().map(|d| d.abs()).sum::<f64>() / batch;
    let grad = diff.mapv(|d| {
        if d > 0.0 {
            1.0 / batch
        } else if d < 0.0 {
            -1.0 / batch
        } else {
            0.0
        }
    });
    (value, grad)
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Overwrites logits with their softmax.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter_mut().for_each(|z| *z = (*z - max).exp());
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= sum);
}

/// Mean softmax cross-entropy of `logits` against integer `labels`.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let batch = logits.nrows().max(1) as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut value = 0.0;
    for (r, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let p = softmax(row.as_slice().expect("contiguous logits"));
        value -= p[y].max(f64::MIN_POSITIVE).ln();
        for (c, pc) in p.iter().enumerate() {
            grad[[r, c]] = (pc - if c == y { 1.0 } else { 0.0 }) / batch;
        }
    }
    (value / batch, grad)
}

/// `KL(N(mu, diag(exp(logvar))) || N(0, I)) = 0.5 * sum(mu^2 + exp(logvar) - logvar - 1)`.
pub fn kl_diag_gaussian(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

/// Batch-mean KL and its gradients with respect to `mu` and `logvar`.
pub fn kl_batch(mu: ArrayView2<f64>, logvar: ArrayView2<f64>) -> (f64, Array2<f64>, Array2<f64>) {
    let batch = mu.nrows().max(1) as f64;
    let value = mu
        .rows()
        .into_iter()
        .zip(logvar.rows())
        .map(|(m, lv)| {
            m.iter()
                .zip(lv.iter())
                .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
                .sum::<f64>()
        })
        .sum::<f64>()
        * 0.5
        / batch;
    let dmu = mu.mapv(|m| m / batch);
    let dlogvar = logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0) / batch);
    (value, dmu, dlogvar)
}

/// `z = mu + exp(0.5 * logvar) * eps` with `eps ~ N(0, I)` from `seed`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| m + (0.5 * lv).exp() * standard_normal(&mut rng))
        .collect()
}

/// Matrix of standard-normal draws.
pub fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_simple_fn((rows, cols), || standard_normal(&mut rng))
}

/// Per-row sums, handy when reporting per-example losses.
pub fn row_sums(m: ArrayView2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(1))
}
