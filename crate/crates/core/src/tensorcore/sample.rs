use crate::error::{Error, Result};
use crate::tensorcore::Grid1D;

/// One curve per subject on a common grid, stored row-major (subject, grid index).
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    curves: Vec<f64>,
    n: usize,
    grid: Grid1D,
}

impl FunctionalSample {
    pub fn new(curves: Vec<f64>, n: usize, grid: Grid1D) -> Result<Self> {
        if curves.len() != n * grid.len() {
            return Err(Error::Shape(format!(
                "{} values do not fill {n} curves of length {}",
                curves.len(),
                grid.len()
            )));
        }
        if let Some(k) = curves.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value in curve {} at grid index {}",
                k / grid.len(),
                k % grid.len()
            )));
        }
        Ok(FunctionalSample { curves, n, grid })
    }

    pub fn from_fn(n: usize, grid: Grid1D, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let m = grid.len();
        let curves = (0..n * m).map(|k| f(k / m, k % m)).collect();
        Self::new(curves, n, grid)
    }

    pub fn zeros(n: usize, grid: Grid1D) -> Self {
        FunctionalSample {
            curves: vec![0.0; n * grid.len()],
            n,
            grid,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.curves[i * m..(i + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.curves
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.curves[i * self.grid.len() + j]
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut curves = Vec::with_capacity(idx.len() * self.grid.len());
        for &i in idx {
            if i >= self.n {
                return Err(Error::Shape(format!("subject {i} out of range")));
            }
            curves.extend_from_slice(self.curve(i));
        }
        Ok(FunctionalSample {
            curves,
            n: idx.len(),
            grid: self.grid.clone(),
        })
    }

    /// Pointwise mean curve.
    pub fn mean_curve(&self) -> Vec<f64> {
        let m = self.grid.len();
        let mut mean = vec![0.0; m];
        for i in 0..self.n {
            for (a, v) in mean.iter_mut().zip(self.curve(i)) {
                *a += v;
            }
        }
        for a in &mut mean {
            *a /= self.n as f64;
        }
        mean
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        FunctionalSample {
            curves: self.curves.iter().map(|&v| f(v)).collect(),
            n: self.n,
            grid: self.grid.clone(),
        }
    }

    /// Pointwise `self + other`.
    pub fn add(&self, other: &FunctionalSample) -> Result<Self> {
        self.check_conforms(other)?;
        Ok(FunctionalSample {
            curves: self.curves.iter().zip(&other.curves).map(|(a, b)| a + b).collect(),
            n: self.n,
            grid: self.grid.clone(),
        })
    }

    pub fn check_conforms(&self, other: &FunctionalSample) -> Result<()> {
        if self.n != other.n || self.grid.len() != other.grid.len() {
            return Err(Error::Shape(format!(
                "samples of {}x{} and {}x{}",
                self.n,
                self.grid.len(),
                other.n,
                other.grid.len()
            )));
        }
        Ok(())
    }
}
