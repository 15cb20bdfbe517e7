use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered sample points of a functional domain with trapezoid quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid1D {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Length of the covered interval.
    pub fn span(&self) -> f64 {
        self.last() - self.first()
    }

    /// Uniform grid of `n` points on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        let h = (b - a) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|j| a + h * j as f64).collect();
        pts[n - 1] = b;
        make_trapezoid_grid(&pts)
    }

    /// Trapezoid weights restricted to the points selected by `keep`.
    ///
    /// Unselected points receive weight zero; the selected ones form their own
    /// trapezoid rule over the sub-grid.
    pub fn subset_weights(&self, keep: &[bool]) -> Result<Vec<f64>> {
        if keep.len() != self.len() {
            return Err(Error::Shape(format!(
                "mask length {} does not match grid length {}",
                keep.len(),
                self.len()
            )));
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&j| keep[j]).collect();
        if idx.len() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 observed points, got {}",
                idx.len()
            )));
        }
        let sub: Vec<f64> = idx.iter().map(|&j| self.points[j]).collect();
        let w = trapezoid_weights(&sub);
        let mut out = vec![0.0; self.len()];
        for (&j, wj) in idx.iter().zip(w) {
            out[j] = wj;
        }
        Ok(out)
    }

    /// Quadrature integral of a sampled curve.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }
}

fn trapezoid_weights(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut w = vec![0.0; n];
    w[0] = (p[1] - p[0]) / 2.0;
    w[n - 1] = (p[n - 1] - p[n - 2]) / 2.0;
    for j in 1..n - 1 {
        w[j] = (p[j + 1] - p[j - 1]) / 2.0;
    }
    w
}

/// Builds a grid carrying composite trapezoid weights.
pub fn make_trapezoid_grid(points: &[f64]) -> Result<Grid1D> {
    if points.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidGrid("non-finite grid point".into()));
    }
    if let Some(j) = points.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "points must be strictly increasing (index {} -> {})",
            j,
            j + 1
        )));
    }
    Ok(Grid1D {
        points: points.to_vec(),
        weights: trapezoid_weights(points),
    })
}

/// Quadrature inner product `sum_j f_j g_j w_j`.
pub fn weighted_inner_product(f: &[f64], g: &[f64], grid: &Grid1D) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(Error::Shape(format!(
            "curves of length {} and {} on a grid of {} points",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    Ok(f.iter()
        .zip(g)
        .zip(grid.weights())
        .map(|((a, b), w)| a * b * w)
        .sum())
}
