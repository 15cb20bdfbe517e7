use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{fourier, rng_for};
use crate::error::{Error, Result};
use crate::tensorcore::{FunctionalSample, Grid1D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    Complete,
    /// The second half of the coefficient surfaces is identically zero.
    HalfSparse,
}

impl CoefficientMode {
    pub fn label(&self) -> &'static str {
        match self {
            CoefficientMode::Complete => "complete",
            CoefficientMode::HalfSparse => "half_sparse",
        }
    }
}

/// Generator of `A_i(s) = m(s) + sum_j int chi_ij(g) theta_j(g, s) dg + eps_i(s)`.
///
/// Predictors are Fourier series with `n_terms` Gaussian coefficients, the
/// `k`-th having standard deviation `predictor_decay^k`. Each `theta_j` is
/// `a_0 f_0(g) f_u(s) + a_1 f_1(g) f_v(s)` with positive random amplitudes and
/// `u != v`; `m(s) = sin(2 pi s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FofGenConfig {
    pub n: usize,
    pub p: usize,
    pub g_points: usize,
    pub s_points: usize,
    pub n_terms: usize,
    pub predictor_decay: f64,
    pub coefficient_mode: CoefficientMode,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for FofGenConfig {
    fn default() -> Self {
        FofGenConfig {
            n: 20,
            p: 10,
            g_points: 21,
            s_points: 21,
            n_terms: 7,
            predictor_decay: 0.1,
            coefficient_mode: CoefficientMode::Complete,
            noise_sd: 0.05,
            seed: 2,
        }
    }
}

impl FofGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        if self.n < 1 {
            return bad("n must be >= 1".into());
        }
        if self.g_points < 2 || self.s_points < 2 {
            return bad("grids need at least 2 points".into());
        }
        if self.n_terms < 2 {
            return bad(format!("n_terms must be >= 2, got {}", self.n_terms));
        }
        if !(self.predictor_decay > 0.0 && self.predictor_decay <= 1.0) {
            return bad(format!("predictor_decay must lie in (0, 1], got {}", self.predictor_decay));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        Ok(())
    }

    /// Whether surface `j` (zero-based) is forced to zero.
    pub fn is_zeroed(&self, j: usize) -> bool {
        self.coefficient_mode == CoefficientMode::HalfSparse && j >= self.p - self.p / 2
    }
}

/// One rank-two coefficient surface, `sum_t amp_t f_{g_t}(g) f_{s_t}(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub terms: Vec<(f64, usize, usize)>,
}

impl SurfaceSpec {
    pub fn eval(&self, g: f64, s: f64) -> f64 {
        self.terms.iter().map(|&(a, u, v)| a * fourier(u, g) * fourier(v, s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FofTruth {
    pub surfaces: Vec<SurfaceSpec>,
    /// `theta_j` on the predictor x response grids.
    pub theta: Vec<DMatrix<f64>>,
    pub intercept: Vec<f64>,
    /// Fourier coefficients of predictor `j`, subject-major.
    pub predictor_coefficients: Vec<Vec<f64>>,
    /// Noise-free responses.
    pub signal: FunctionalSample,
}

impl FofTruth {
    /// Predictor `j` of subject `i` at an arbitrary point.
    pub fn predictor_at(&self, j: usize, i: usize, g: f64) -> f64 {
        let c = &self.predictor_coefficients[j];
        let t = c.len() / self.signal.n();
        (0..t).map(|k| c[i * t + k] * fourier(k, g)).sum()
    }
}

pub fn intercept_curve(s: f64) -> f64 {
    (2.0 * std::f64::consts::PI * s).sin()
}

pub fn gen_fof(config: &FofGenConfig) -> Result<(Vec<FunctionalSample>, FunctionalSample, FofTruth)> {
    gen_fof_with(config, &mut rng_for(config.seed, 0))
}

pub(crate) fn gen_fof_with(
    config: &FofGenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<FunctionalSample>, FunctionalSample, FofTruth)> {
    config.validate()?;
    let g_grid = Grid1D::uniform(0.0, 1.0, config.g_points)?;
    let s_grid = Grid1D::uniform(0.0, 1.0, config.s_points)?;
    let (n, t) = (config.n, config.n_terms);

    let surfaces: Vec<SurfaceSpec> = (0..config.p)
        .map(|j| {
            let a0 = rng.random_range(0.5..1.5);
            let a1 = rng.random_range(0.5..1.5);
            if config.is_zeroed(j) {
                SurfaceSpec { terms: Vec::new() }
            } else {
                SurfaceSpec {
                    terms: vec![(a0, 0, j % 3), (a1, 1, (j + 1) % 3)],
                }
            }
        })
        .collect();
    let theta: Vec<DMatrix<f64>> = surfaces
        .iter()
        .map(|sp| {
            DMatrix::from_fn(config.g_points, config.s_points, |a, b| {
                sp.eval(g_grid.points()[a], s_grid.points()[b])
            })
        })
        .collect();

    let mut predictor_coefficients = Vec::with_capacity(config.p);
    let mut predictors = Vec::with_capacity(config.p);
    let sd: Vec<f64> = (0..t).map(|k| config.predictor_decay.powi(k as i32)).collect();
    for _ in 0..config.p {
        let c: Vec<f64> = (0..n * t)
            .map(|k| sd[k % t] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x = FunctionalSample::from_fn(n, g_grid.clone(), |i, a| {
            (0..t).map(|k| c[i * t + k] * fourier(k, g_grid.points()[a])).sum()
        })?;
        predictor_coefficients.push(c);
        predictors.push(x);
    }

    let intercept: Vec<f64> = s_grid.points().iter().map(|&s| intercept_curve(s)).collect();
    let wg = g_grid.weights();
    let signal = FunctionalSample::from_fn(n, s_grid.clone(), |i, b| {
        let mut acc = intercept[b];
        for (x, th) in predictors.iter().zip(&theta) {
            acc += (0..config.g_points).map(|a| wg[a] * x.get(i, a) * th[(a, b)]).sum::<f64>();
        }
        acc
    })?;
    let response = if config.noise_sd > 0.0 {
        let noisy: Vec<f64> = signal
            .values()
            .iter()
            .map(|v| v + config.noise_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        FunctionalSample::new(noisy, n, s_grid)?
    } else {
        signal.clone()
    };
    Ok((
        predictors,
        response,
        FofTruth {
            surfaces,
            theta,
            intercept,
            predictor_coefficients,
            signal,
        },
    ))
}
