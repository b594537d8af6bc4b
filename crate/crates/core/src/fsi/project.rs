//! Deterministic 2-D principal-component projection for cluster plots.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataio::format_f64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub group: String,
}

/// Centers `vectors` and projects them onto the two leading eigenvectors of
/// their covariance. Each axis is signed so that its largest-magnitude
/// component is positive.
pub fn project_2d(vectors: &[Vec<f64>], groups: &[String]) -> Result<Vec<ProjectedPoint>> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientData("projection needs at least 2 vectors".into()));
    }
    if groups.len() != vectors.len() {
        return Err(Error::Shape(format!("{} vectors but {} group tags", vectors.len(), groups.len())));
    }
    let dim = vectors[0].len();
    if dim < 2 {
        return Err(Error::Shape("projection needs dim >= 2".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimMismatch { context: "projection".into(), expected: dim, found: v.len() });
    }
    let n = vectors.len();
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&c| {
            let col: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let lead = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if lead < 0.0 {
                col.iter().map(|v| -v).collect()
            } else {
                col
            }
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let row = centered.row(i);
            let dot = |a: &[f64]| row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            ProjectedPoint { x: dot(&axes[0]), y: dot(&axes[1]), group: groups[i].clone() }
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ProjectionRow {
    x: String,
    y: String,
    group: String,
}

/// Writes `x,y,group` CSV.
pub fn write_projection<W: Write>(points: &[ProjectedPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(ProjectionRow { x: format_f64(p.x), y: format_f64(p.y), group: p.group.clone() })?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
