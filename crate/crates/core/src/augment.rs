//! Training-free augmentation: duplication, uniform perturbation, linear
//! deltas and extrapolation.
//!
//! Every generator takes the seed vectors of one label, an output count and a
//! `u64` seed, and returns an [`AugmentedBatch`]. Identical inputs always give
//! bit-identical output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{AugmentedBatch, Method};
use crate::error::{Error, Result};
use crate::rng::{distinct_pair, rng_from_seed, symmetric_unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    Additive,
    Multiplicative,
    /// Each output independently picks additive or multiplicative noise.
    #[default]
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub mode: PerturbMode,
    /// Noise is drawn from `U[-alpha, alpha]` per component.
    pub alpha: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            mode: PerturbMode::Mixed,
            alpha: 1.0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("perturb alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtraConfig {
    pub lambda: f64,
}

impl Default for ExtraConfig {
    fn default() -> Self {
        Self { lambda: 0.5 }
    }
}

impl ExtraConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::Config("extrapolation lambda must be finite".into()));
        }
        Ok(())
    }
}

/// Common interface of the training-free generators.
pub trait Augmenter {
    fn method(&self) -> Method;

    fn generate(&self, label: usize, seeds: &[Vec<f64>], n: usize, seed: u64) -> Result<AugmentedBatch>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Upsample;

#[derive(Debug, Clone, Copy, Default)]
pub struct Perturb(pub PerturbConfig);

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearDelta;

#[derive(Debug, Clone, Copy, Default)]
pub struct Extrapolate(pub ExtraConfig);

impl Augmenter for Upsample {
    fn method(&self) -> Method {
        Method::Upsample
    }

    fn generate(&self, label: usize, seeds: &[Vec<f64>], n: usize, seed: u64) -> Result<AugmentedBatch> {
        Ok(batch(label, Method::Upsample, seed, upsample(seeds, n)?))
    }
}

impl Augmenter for Perturb {
    fn method(&self) -> Method {
        Method::Perturb
    }

    fn generate(&self, label: usize, seeds: &[Vec<f64>], n: usize, seed: u64) -> Result<AugmentedBatch> {
        Ok(batch(label, Method::Perturb, seed, perturb(seeds, n, &self.0, seed)?))
    }
}

impl Augmenter for LinearDelta {
    fn method(&self) -> Method {
        Method::Linear
    }

    fn generate(&self, label: usize, seeds: &[Vec<f64>], n: usize, seed: u64) -> Result<AugmentedBatch> {
        Ok(batch(label, Method::Linear, seed, linear_delta(seeds, n, seed)?))
    }
}

impl Augmenter for Extrapolate {
    fn method(&self) -> Method {
        Method::Extra
    }

    fn generate(&self, label: usize, seeds: &[Vec<f64>], n: usize, seed: u64) -> Result<AugmentedBatch> {
        Ok(batch(label, Method::Extra, seed, extrapolate(seeds, n, &self.0, seed)?))
    }
}

fn batch(label: usize, method: Method, gen_seed: u64, vectors: Vec<Vec<f64>>) -> AugmentedBatch {
    AugmentedBatch {
        label,
        vectors,
        method,
        gen_seed,
    }
}

fn check_seeds(seeds: &[Vec<f64>], min: usize, what: &str) -> Result<()> {
    if seeds.len() < min {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {min} seed vector(s), got {}",
            seeds.len()
        )));
    }
    let dim = seeds[0].len();
    if let Some(bad) = seeds.iter().find(|s| s.len() != dim) {
        return Err(Error::DimMismatch {
            context: format!("{what} seeds"),
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(())
}

/// Round-robin duplication: output `m` is `seeds[m % k]`.
pub fn upsample(seeds: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    check_seeds(seeds, 1, "upsample")?;
    Ok((0..n).map(|m| seeds[m % seeds.len()].clone()).collect())
}

/// Round-robin base vectors with uniform noise: additive `x + e` or
/// multiplicative `x * (1 + e)`.
pub fn perturb(seeds: &[Vec<f64>], n: usize, cfg: &PerturbConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_seeds(seeds, 1, "perturb")?;
    let mut rng = rng_from_seed(seed);
    Ok((0..n)
        .map(|m| {
            let base = &seeds[m % seeds.len()];
            let additive = match cfg.mode {
                PerturbMode::Additive => true,
                PerturbMode::Multiplicative => false,
                PerturbMode::Mixed => rng.random_bool(0.5),
            };
            base.iter()
                .map(|&x| {
                    let e = cfg.alpha * symmetric_unit(&mut rng);
                    if additive {
                        x + e
                    } else {
                        x * (1.0 + e)
                    }
                })
                .collect()
        })
        .collect())
}

/// Index triples `(i, j, k)` with `i != j` drawn as [`linear_delta`] draws them.
pub fn sample_triples(k: usize, n: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let (i, j) = distinct_pair(k, &mut rng);
            (i, j, rng.random_range(0..k))
        })
        .collect()
}

/// `(X_i - X_j) + X_k` for each triple.
pub fn linear_delta_at(seeds: &[Vec<f64>], triples: &[(usize, usize, usize)]) -> Vec<Vec<f64>> {
    triples
        .iter()
        .map(|&(i, j, k)| {
            seeds[i]
                .iter()
                .zip(&seeds[j])
                .zip(&seeds[k])
                .map(|((a, b), c)| (a - b) + c)
                .collect()
        })
        .collect()
}

pub fn linear_delta(seeds: &[Vec<f64>], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_seeds(seeds, 2, "linear delta")?;
    Ok(linear_delta_at(seeds, &sample_triples(seeds.len(), n, seed)))
}

/// Ordered pairs `(i, j)` with `i != j` drawn as [`extrapolate`] draws them.
pub fn sample_pairs(k: usize, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| distinct_pair(k, &mut rng)).collect()
}

/// `(X_i - X_j) * lambda + X_i` for each pair.
pub fn extrapolate_at(seeds: &[Vec<f64>], pairs: &[(usize, usize)], lambda: f64) -> Vec<Vec<f64>> {
    pairs
        .iter()
        .map(|&(i, j)| {
            seeds[i]
                .iter()
                .zip(&seeds[j])
                .map(|(a, b)| (a - b) * lambda + a)
                .collect()
        })
        .collect()
}

pub fn extrapolate(seeds: &[Vec<f64>], n: usize, cfg: &ExtraConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_seeds(seeds, 2, "extrapolation")?;
    Ok(extrapolate_at(seeds, &sample_pairs(seeds.len(), n, seed), cfg.lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds3() -> Vec<Vec<f64>> {
        vec![vec![0.0, 1.0], vec![1.0, 2.0], vec![5.0, 5.0]]
    }

    #[test]
    fn upsample_divisible_and_remainder() {
        let seeds: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let out = upsample(&seeds, 100).unwrap();
        for s in &seeds {
            assert_eq!(out.iter().filter(|v| *v == s).count(), 10);
        }
        let out = upsample(&seeds3(), 5).unwrap();
        let counts: Vec<usize> = seeds3().iter().map(|s| out.iter().filter(|v| *v == s).count()).collect();
        assert_eq!(counts, vec![2, 2, 1]);
        assert!(upsample(&seeds3(), 0).unwrap().is_empty());
        assert!(upsample(&[], 0).unwrap().is_empty());
        assert!(upsample(&[], 3).is_err());
    }

    #[test]
    fn perturb_zero_alpha_is_upsample() {
        for mode in [PerturbMode::Additive, PerturbMode::Multiplicative, PerturbMode::Mixed] {
            let cfg = PerturbConfig { mode, alpha: 0.0 };
            assert_eq!(perturb(&seeds3(), 17, &cfg, 3).unwrap(), upsample(&seeds3(), 17).unwrap());
        }
    }

    #[test]
    fn perturb_support_bounds() {
        let cfg = PerturbConfig { mode: PerturbMode::Additive, alpha: 1.0 };
        let out = perturb(&seeds3(), 300, &cfg, 1).unwrap();
        for (m, v) in out.iter().enumerate() {
            let base = &seeds3()[m % 3];
            assert!(v.iter().zip(base).all(|(a, b)| (a - b).abs() <= 1.0));
        }
        let ones = vec![vec![1.0; 4]];
        let cfg = PerturbConfig { mode: PerturbMode::Multiplicative, alpha: 0.5 };
        let out = perturb(&ones, 10_000, &cfg, 2).unwrap();
        assert!(out.iter().flatten().all(|&x| (0.5..=1.5).contains(&x)));
    }

    #[test]
    fn perturb_mixed_uses_both_modes() {
        // additive noise on a zero vector is nonzero; multiplicative keeps it zero
        let zeros = vec![vec![0.0; 3]];
        let out = perturb(&zeros, 400, &PerturbConfig::default(), 8).unwrap();
        let unchanged = out.iter().filter(|v| v.iter().all(|&x| x == 0.0)).count();
        assert!((150..250).contains(&unchanged), "{unchanged}");
    }

    #[test]
    fn linear_delta_direct_case() {
        assert_eq!(linear_delta_at(&seeds3(), &[(1, 0, 2)]), vec![vec![6.0, 6.0]]);
        // j == k cancels to X_i
        assert_eq!(linear_delta_at(&seeds3(), &[(2, 1, 1)]), vec![seeds3()[2].clone()]);
    }

    #[test]
    fn linear_and_extra_follow_logged_indices() {
        let s = seeds3();
        let t = sample_triples(3, 50, 4);
        assert!(t.iter().all(|(i, j, _)| i != j));
        assert_eq!(linear_delta(&s, 50, 4).unwrap(), linear_delta_at(&s, &t));
        let p = sample_pairs(3, 50, 4);
        let cfg = ExtraConfig::default();
        assert_eq!(extrapolate(&s, 50, &cfg, 4).unwrap(), extrapolate_at(&s, &p, 0.5));
        assert!(linear_delta(&s[..1], 5, 0).is_err());
        assert!(extrapolate(&s[..1], 5, &cfg, 0).is_err());
    }

    #[test]
    fn extrapolate_cases() {
        let s = vec![vec![2.0, 2.0], vec![0.0, 0.0]];
        assert_eq!(extrapolate_at(&s, &[(0, 1)], 0.5), vec![vec![3.0, 3.0]]);
        assert_eq!(extrapolate_at(&s, &[(0, 1)], 0.0), vec![s[0].clone()]);
    }

    #[test]
    fn augmenters_tag_batches() {
        let s = seeds3();
        let b = Perturb::default().generate(4, &s, 7, 99).unwrap();
        assert_eq!((b.label, b.method, b.gen_seed, b.len()), (4, Method::Perturb, 99, 7));
        assert_eq!(Extrapolate::default().method(), Method::Extra);
        assert_eq!(LinearDelta.generate(0, &s, 3, 1).unwrap().method, Method::Linear);
        assert_eq!(Upsample.generate(0, &s, 3, 1).unwrap().vectors, upsample(&s, 3).unwrap());
    }
}
