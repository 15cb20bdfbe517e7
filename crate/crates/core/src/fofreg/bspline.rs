use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamped B-spline basis with equally spaced interior knots on `[lo, hi]`.
///
/// Cubic whenever `n_basis >= 4`; fewer functions lower the order so that the
/// basis still has exactly `n_basis` members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsplineBasis {
    pub lo: f64,
    pub hi: f64,
    pub order: usize,
    pub knots: Vec<f64>,
}

impl BsplineBasis {
    pub fn new(lo: f64, hi: f64, n_basis: usize) -> Result<Self> {
        if n_basis < 2 {
            return Err(Error::InvalidConfig(format!(
                "a basis needs at least 2 functions, got {n_basis}"
            )));
        }
        if !(hi > lo) {
            return Err(Error::InvalidGrid(format!("empty interval [{lo}, {hi}]")));
        }
        let order = n_basis.min(4);
        let interior = n_basis - order;
        let mut knots = vec![lo; order];
        let h = (hi - lo) / (interior + 1) as f64;
        knots.extend((1..=interior).map(|j| lo + h * j as f64));
        knots.extend(std::iter::repeat_n(hi, order));
        Ok(BsplineBasis { lo, hi, order, knots })
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.order
    }

    /// Values of every basis function at `x` (Cox-de Boor recursion).
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let tol = 1e-12 * (self.hi - self.lo).max(1.0);
        if !(x >= self.lo - tol && x <= self.hi + tol) {
            return Err(Error::InvalidConfig(format!(
                "point {x} outside the basis domain [{}, {}]",
                self.lo, self.hi
            )));
        }
        let x = x.clamp(self.lo, self.hi);
        let t = &self.knots;
        let nk = t.len();
        // index of the knot interval [t_j, t_{j+1}) containing x; the right end
        // belongs to the last non-degenerate interval
        let span = if x >= self.hi {
            (0..nk - 1).rev().find(|&j| t[j] < t[j + 1]).unwrap_or(0)
        } else {
            (0..nk - 1).find(|&j| t[j] <= x && x < t[j + 1]).unwrap_or(0)
        };
        let mut b: Vec<f64> = (0..nk - 1).map(|j| if j == span { 1.0 } else { 0.0 }).collect();
        for k in 2..=self.order {
            let next: Vec<f64> = (0..nk - k)
                .map(|j| {
                    let mut v = 0.0;
                    let d1 = t[j + k - 1] - t[j];
                    if d1 > 0.0 {
                        v += (x - t[j]) / d1 * b[j];
                    }
                    let d2 = t[j + k] - t[j + 1];
                    if d2 > 0.0 {
                        v += (t[j + k] - x) / d2 * b[j + 1];
                    }
                    v
                })
                .collect();
            b = next;
        }
        Ok(b)
    }

    /// Design matrix with one row per point and one column per basis function.
    pub fn matrix(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let nb = self.n_basis();
        let mut m = DMatrix::zeros(points.len(), nb);
        for (r, &x) in points.iter().enumerate() {
            for (c, v) in self.eval(x)?.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_nonnegativity() {
        for nb in [2, 3, 4, 7, 15] {
            let b = BsplineBasis::new(-1.0, 2.0, nb).unwrap();
            assert_eq!(b.n_basis(), nb);
            for j in 0..=60 {
                let x = -1.0 + 3.0 * j as f64 / 60.0;
                let v = b.eval(x).unwrap();
                assert!(v.iter().all(|&y| y >= -1e-15));
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn endpoints_interpolate() {
        let b = BsplineBasis::new(0.0, 1.0, 6).unwrap();
        let v0 = b.eval(0.0).unwrap();
        let v1 = b.eval(1.0).unwrap();
        assert_eq!(v0[0], 1.0);
        assert_eq!(v1[5], 1.0);
    }

    #[test]
    fn linear_two_function_basis() {
        let b = BsplineBasis::new(0.0, 2.0, 2).unwrap();
        let v = b.eval(0.5).unwrap();
        assert!((v[0] - 0.75).abs() < 1e-15 && (v[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reproduces_cubics() {
        // cubic splines reproduce polynomials up to degree 3
        let b = BsplineBasis::new(0.0, 1.0, 8).unwrap();
        let xs: Vec<f64> = (0..30).map(|j| j as f64 / 29.0).collect();
        let m = b.matrix(&xs).unwrap();
        let y = nalgebra::DVector::from_iterator(30, xs.iter().map(|x| x * x * x - 2.0 * x + 0.5));
        let coef = m.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        assert!((m * coef - y).amax() < 1e-10);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let b = BsplineBasis::new(0.0, 1.0, 5).unwrap();
        assert!(b.eval(1.5).is_err());
    }
}
