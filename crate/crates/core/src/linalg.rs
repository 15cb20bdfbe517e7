//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this (relative to the largest one) are treated as roundoff.
pub const CLAMP_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Solves `cov * G * v = lambda * v` with `v' G v = 1`, given the lower Cholesky
/// factor `l` of the metric `G = l l'`.
///
/// Eigenvalues come back descending and clamped at zero: slightly negative values
/// (within [`CLAMP_TOL`] of the spectrum scale) always, arbitrarily negative ones only
/// when `allow_indefinite` is set. Each eigenvector is flipped so that its
/// largest-magnitude entry is positive.
pub fn metric_eigen(
    cov: &DMatrix<f64>,
    l: &DMatrix<f64>,
    allow_indefinite: bool,
    stage: &'static str,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite covariance entry in {stage}")));
    }
    let a = l.transpose() * cov * l;
    let (mut vals, u) = symmetric_eigen_desc(&a);
    let scale = vals.first().map_or(0.0, |v| v.abs()).max(1.0);
    for v in &mut vals {
        if *v < 0.0 {
            if *v >= -CLAMP_TOL * scale || allow_indefinite {
                *v = 0.0;
            } else {
                return Err(Error::Numerical {
                    stage,
                    detail: format!("covariance has eigenvalue {v:e} below the clamp tolerance"),
                });
            }
        }
    }
    let lt = l.transpose();
    let mut vecs = lt
        .clone()
        .lu()
        .solve(&u)
        .ok_or_else(|| Error::Numerical {
            stage,
            detail: "singular metric".into(),
        })?;
    for mut col in vecs.column_iter_mut() {
        let mut best = 0usize;
        for k in 1..col.len() {
            if col[k].abs() > col[best].abs() {
                best = k;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    Ok((vals, vecs))
}

/// Diagonal Cholesky factor of a diagonal metric.
pub fn diag_sqrt(weights: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        weights.len(),
        weights.iter().map(|w| w.sqrt()),
    ))
}
