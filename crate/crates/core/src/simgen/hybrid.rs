use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{fourier, rng_for};
use crate::error::{Error, Result};
use crate::tensorcore::{Grid1D, HybridTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaSparsity {
    Complete,
    /// Each subject keeps this fraction of its omega slices, chosen uniformly.
    Sparse { fraction: f64 },
}

impl OmegaSparsity {
    pub fn label(&self) -> &'static str {
        match self {
            OmegaSparsity::Complete => "complete",
            OmegaSparsity::Sparse { .. } => "sparse",
        }
    }
}

/// Generator of `Y_i = sum xi_{i,klm} V_k phi_l psi_m + eps`.
///
/// `V_k` are orthonormalised Gaussian region vectors, `phi_l` and `psi_m` the
/// leading Fourier functions on `[0, 1]` (constant, sine, cosine, ...). Score
/// standard deviations default to `score_scale * score_decay^(k + l + m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridGenConfig {
    pub n: usize,
    pub regions: usize,
    pub omega_points: usize,
    pub s_points: usize,
    pub k_true: usize,
    pub l_true: usize,
    pub m_true: usize,
    pub score_scale: f64,
    pub score_decay: f64,
    /// Explicit per-component standard deviations in `(k, l, m)` order, `m` fastest.
    pub score_sd: Option<Vec<f64>>,
    pub noise_sd: f64,
    pub omega_sparsity: OmegaSparsity,
    pub seed: u64,
}

impl Default for HybridGenConfig {
    fn default() -> Self {
        HybridGenConfig {
            n: 20,
            regions: 4,
            omega_points: 21,
            s_points: 21,
            k_true: 2,
            l_true: 2,
            m_true: 3,
            score_scale: 2.0,
            score_decay: 0.8,
            score_sd: None,
            noise_sd: 3.0,
            omega_sparsity: OmegaSparsity::Complete,
            seed: 1,
        }
    }
}

impl HybridGenConfig {
    pub fn n_components(&self) -> usize {
        self.k_true * self.l_true * self.m_true
    }

    /// Standard deviations of every true component, `(k, l, m)` order.
    pub fn component_sd(&self) -> Vec<f64> {
        if let Some(sd) = &self.score_sd {
            return sd.clone();
        }
        let mut out = Vec::with_capacity(self.n_components());
        for k in 0..self.k_true {
            for l in 0..self.l_true {
                for m in 0..self.m_true {
                    out.push(self.score_scale * self.score_decay.powi((k + l + m) as i32));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.k_true == 0 || self.l_true == 0 || self.m_true == 0 {
            return bad("true ranks must be >= 1".into());
        }
        if self.k_true > self.regions {
            return bad(format!(
                "k_true = {} exceeds the number of regions {}",
                self.k_true, self.regions
            ));
        }
        if self.omega_points < 2 || self.s_points < 2 {
            return bad("grids need at least 2 points".into());
        }
        if self.l_true > self.omega_points || self.m_true > self.s_points {
            return bad("true ranks exceed the grid sizes".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if self.score_sd.is_none() && !(self.score_decay > 0.0 && self.score_decay <= 1.0) {
            return bad(format!("score_decay must lie in (0, 1], got {}", self.score_decay));
        }
        let sd = self.component_sd();
        if sd.len() != self.n_components() {
            return bad(format!(
                "score_sd has {} entries, expected {}",
                sd.len(),
                self.n_components()
            ));
        }
        if sd.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("score standard deviations must be positive".into());
        }
        if let OmegaSparsity::Sparse { fraction } = self.omega_sparsity {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return bad(format!("sparse fraction must lie in (0, 1], got {fraction}"));
            }
        }
        Ok(())
    }
}

/// Ground truth behind a generated tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTruth {
    /// `R x K`, orthonormal columns.
    pub region_vectors: DMatrix<f64>,
    /// `|omega grid| x L`.
    pub omega_functions: DMatrix<f64>,
    /// `|s grid| x M`.
    pub s_functions: DMatrix<f64>,
    /// `n x K*L*M`, `(k, l, m)` order.
    pub scores: Vec<f64>,
    pub score_sd: Vec<f64>,
    /// Noise-free dense signal.
    pub signal: HybridTensor,
}

pub fn gen_hybrid(config: &HybridGenConfig) -> Result<(HybridTensor, HybridTruth)> {
    gen_hybrid_with(config, &mut rng_for(config.seed, 0))
}

pub(crate) fn gen_hybrid_with(
    config: &HybridGenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(HybridTensor, HybridTruth)> {
    config.validate()?;
    let omega_grid = Grid1D::uniform(0.0, 1.0, config.omega_points)?;
    let s_grid = Grid1D::uniform(0.0, 1.0, config.s_points)?;
    let (nr, kk, ll, mm) = (config.regions, config.k_true, config.l_true, config.m_true);

    let gauss = DMatrix::from_fn(nr, kk, |_, _| rng.sample::<f64, _>(StandardNormal));
    let region_vectors = orthonormalize(gauss)?;
    let omega_functions = DMatrix::from_fn(config.omega_points, ll, |w, l| fourier(l, omega_grid.points()[w]));
    let s_functions = DMatrix::from_fn(config.s_points, mm, |s, m| fourier(m, s_grid.points()[s]));

    let score_sd = config.component_sd();
    let p = score_sd.len();
    let scores: Vec<f64> = (0..config.n * p)
        .map(|k| rng.sample::<f64, _>(StandardNormal) * score_sd[k % p])
        .collect();

    let signal = HybridTensor::from_fn(config.n, nr, omega_grid.clone(), s_grid.clone(), |i, r, w, s| {
        let mut acc = 0.0;
        let mut c = 0;
        for k in 0..kk {
            for l in 0..ll {
                let vw = region_vectors[(r, k)] * omega_functions[(w, l)];
                for m in 0..mm {
                    acc += scores[i * p + c] * vw * s_functions[(s, m)];
                    c += 1;
                }
            }
        }
        acc
    })?;

    let mut values = signal.values().to_vec();
    if config.noise_sd > 0.0 {
        for v in &mut values {
            *v += config.noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mask = match config.omega_sparsity {
        OmegaSparsity::Complete => None,
        OmegaSparsity::Sparse { fraction } => {
            let nw = config.omega_points;
            let keep = ((fraction * nw as f64).round() as usize).clamp(2, nw);
            let mut mask = vec![false; config.n * nw];
            for i in 0..config.n {
                for w in sample(rng, nw, keep).iter() {
                    mask[i * nw + w] = true;
                }
            }
            Some(mask)
        }
    };
    let tensor = HybridTensor::new(values, config.n, nr, omega_grid, s_grid, mask)?;
    Ok((
        tensor,
        HybridTruth {
            region_vectors,
            omega_functions,
            s_functions,
            scores,
            score_sd,
            signal,
        },
    ))
}

/// Gram-Schmidt on the columns.
fn orthonormalize(mut a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for k in 0..a.ncols() {
        for j in 0..k {
            let proj = a.column(j).dot(&a.column(k));
            let cj = a.column(j).into_owned();
            a.column_mut(k).axpy(-proj, &cj, 1.0);
        }
        let norm = a.column(k).norm();
        if norm < 1e-12 {
            return Err(Error::Numerical {
                stage: "region vectors",
                detail: "degenerate random draw".into(),
            });
        }
        a.column_mut(k).scale_mut(1.0 / norm);
    }
    Ok(a)
}
