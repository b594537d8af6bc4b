use serde::{Deserialize, Serialize};

use crate::dataio::Method;
use crate::error::{Error, Result};

/// Mean and sample standard deviation (n - 1 denominator). For a single
/// value the SD is reported as 0 with `sd_defined = false`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub sd_defined: bool,
}

pub fn aggregate(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InsufficientData("cannot aggregate an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(Summary { mean, sd: 0.0, sd_defined: false });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Summary { mean, sd: var.sqrt(), sd_defined: true })
}

/// `"87.46 (2.87)"`: fractions rendered as percentages with two decimals.
pub fn format_mean_sd(summary: &Summary) -> String {
    format!("{:.2} ({:.2})", summary.mean * 100.0, summary.sd * 100.0)
}

/// Amount of generated data in a result cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AugSize {
    None,
    /// Absolute number of generated target examples.
    Count(usize),
    /// Per-class fraction of the real class size.
    Fraction(f64),
}

impl AugSize {
    pub fn label(&self) -> String {
        match *self {
            AugSize::None => String::new(),
            AugSize::Count(n) => n.to_string(),
            AugSize::Fraction(f) => {
                let p = f * 100.0;
                if (p - p.round()).abs() < 1e-9 {
                    format!("{:.0}%", p.round())
                } else {
                    format!("{p}%")
                }
            }
        }
    }
}

/// Per-run accuracies of one (method, size) cell and their summary.
/// `method == None` marks the no-augmentation baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub method: Option<Method>,
    pub size: AugSize,
    pub runs: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub sd_defined: bool,
}

impl AggregateResult {
    pub fn new(method: Option<Method>, size: AugSize, runs: Vec<f64>) -> Result<Self> {
        let s = aggregate(&runs)?;
        Ok(Self {
            method,
            size,
            runs,
            mean: s.mean,
            sd: s.sd,
            sd_defined: s.sd_defined,
        })
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mean: self.mean,
            sd: self.sd,
            sd_defined: self.sd_defined,
        }
    }

    pub fn method_name(&self) -> &'static str {
        self.method.map_or("No Augmentation", Method::display_name)
    }
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Returns 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
