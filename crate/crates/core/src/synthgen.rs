//! Class-conditional Gaussian mixtures standing in for a trained feature
//! extractor.

use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetBundle, EmbeddingDataset, LabelVocab};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, standard_normal};

/// Intent names of the seven-class benchmark shape the default mixture mimics.
pub const SNIPS_INTENTS: [&str; 7] = [
    "AddToPlaylist",
    "BookRestaurant",
    "GetWeather",
    "PlayMusic",
    "RateBook",
    "SearchCreativeWork",
    "SearchScreeningEvent",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub train_count: usize,
    pub dev_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub dim: usize,
    pub classes: Vec<ClassSpec>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("mixture dim must be positive".into()));
        }
        if self.classes.len() < 2 {
            return Err(Error::Config("mixture needs at least 2 classes".into()));
        }
        for c in &self.classes {
            if c.mean.len() != self.dim || c.stddev.len() != self.dim {
                return Err(Error::DimMismatch {
                    context: format!("class `{}` parameters", c.name),
                    expected: self.dim,
                    found: if c.mean.len() != self.dim { c.mean.len() } else { c.stddev.len() },
                });
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Config(format!("class `{}` mean is not finite", c.name)));
            }
            if c.stddev.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Config(format!(
                    "class `{}` stddev components must be positive",
                    c.name
                )));
            }
        }
        Ok(())
    }

    /// Overrides every class's split sizes.
    pub fn with_counts(mut self, train: usize, dev: usize, test: usize) -> Self {
        for c in &mut self.classes {
            c.train_count = train;
            c.dev_count = dev;
            c.test_count = test;
        }
        self
    }
}

/// Seven balanced unit-variance classes whose means lie on a sphere of
/// radius `separation`; 1800/100/100 rows per class.
pub fn snipslike_spec(dim: usize, separation: f64, seed: u64) -> Result<MixtureSpec> {
    if dim < 2 {
        return Err(Error::Config("snips-like mixture needs dim >= 2".into()));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(Error::Config(format!(
            "separation must be positive, got {separation}"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "snipslike-means", 0));
    let classes = SNIPS_INTENTS
        .iter()
        .map(|name| {
            let mut mean: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            mean.iter_mut().for_each(|v| *v *= separation / norm);
            ClassSpec {
                name: (*name).to_string(),
                mean,
                stddev: vec![1.0; dim],
                train_count: 1800,
                dev_count: 100,
                test_count: 100,
            }
        })
        .collect();
    Ok(MixtureSpec { dim, classes })
}

/// Samples a bundle: row of class `c` is `mean_c + stddev_c * z`, `z ~ N(0, I)`.
///
/// Each (split, class) block draws from its own derived stream, so changing
/// one count does not shift the others.
pub fn generate_mixture(spec: &MixtureSpec, seed: u64) -> Result<DatasetBundle> {
    spec.validate()?;
    let vocab = LabelVocab::from_names(spec.classes.iter().map(|c| c.name.clone()))?;
    let split = |tag: &str, count: fn(&ClassSpec) -> usize| -> Result<EmbeddingDataset> {
        let mut ds = EmbeddingDataset::new(spec.dim, vocab.clone())?;
        let mut row = vec![0.0; spec.dim];
        for (c, class) in spec.classes.iter().enumerate() {
            let mut rng = rng_from_seed(derive_seed(seed, tag, c as u64));
            for _ in 0..count(class) {
                for (d, r) in row.iter_mut().enumerate() {
                    *r = class.mean[d] + class.stddev[d] * standard_normal(&mut rng);
                }
                ds.push(c, &row)?;
            }
        }
        Ok(ds)
    };
    DatasetBundle::new(
        split("train", |c| c.train_count)?,
        split("dev", |c| c.dev_count)?,
        split("test", |c| c.test_count)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(std: f64, n: usize) -> MixtureSpec {
        MixtureSpec {
            dim: 2,
            classes: vec![
                ClassSpec {
                    name: "a".into(),
                    mean: vec![1.0, -2.0],
                    stddev: vec![std, std],
                    train_count: n,
                    dev_count: 3,
                    test_count: 4,
                },
                ClassSpec {
                    name: "b".into(),
                    mean: vec![-5.0, 0.5],
                    stddev: vec![std, std * 2.0],
                    train_count: n,
                    dev_count: 3,
                    test_count: 4,
                },
            ],
        }
    }

    #[test]
    fn degenerate_variance_hits_means() {
        let spec = two_class(1e-12, 50);
        let b = generate_mixture(&spec, 1).unwrap();
        for (l, v) in b.train.rows() {
            for (x, m) in v.iter().zip(&spec.classes[l].mean) {
                assert!((x - m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn split_counts() {
        let b = generate_mixture(&two_class(1.0, 100), 2).unwrap();
        assert_eq!(b.train.len(), 200);
        assert_eq!(b.dev.class_counts(), vec![3, 3]);
        assert_eq!(b.test.class_counts(), vec![4, 4]);
    }

    #[test]
    fn empirical_mean_converges() {
        let spec = two_class(1.0, 100_000);
        let b = generate_mixture(&spec, 3).unwrap();
        for (c, class) in spec.classes.iter().enumerate() {
            let rows = b.train.indices_of(c);
            for d in 0..2 {
                let mean = rows.iter().map(|&i| b.train.row(i)[d]).sum::<f64>() / rows.len() as f64;
                let tol = 3.0 * class.stddev[d] / (rows.len() as f64).sqrt();
                assert!((mean - class.mean[d]).abs() < tol, "class {c} dim {d}: {mean}");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = two_class(1.0, 20);
        assert_eq!(generate_mixture(&spec, 5).unwrap(), generate_mixture(&spec, 5).unwrap());
        assert_ne!(generate_mixture(&spec, 5).unwrap(), generate_mixture(&spec, 6).unwrap());
    }

    #[test]
    fn snipslike_shape() {
        let spec = snipslike_spec(16, 8.0, 0).unwrap();
        assert_eq!(spec.classes.len(), 7);
        for c in &spec.classes {
            assert_eq!((c.train_count, c.dev_count, c.test_count), (1800, 100, 100));
            let r = c.mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 8.0).abs() < 1e-9);
        }
        assert!(snipslike_spec(16, 0.0, 0).is_err());
        assert!(snipslike_spec(1, 1.0, 0).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = two_class(1.0, 1);
        s.classes[0].stddev[1] = 0.0;
        assert!(generate_mixture(&s, 0).is_err());
        let mut s = two_class(1.0, 1);
        s.classes.pop();
        assert!(generate_mixture(&s, 0).is_err());
    }
}
