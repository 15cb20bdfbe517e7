use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{fourier, rng_for};
use crate::error::{Error, Result};
use crate::tensorcore::{FunctionalSample, Grid1D, HybridTensor};

/// A tensor whose only predictable structure is one product component.
///
/// `Y_i = xi_i V phi psi_1 + sum_c eta_ic V phi psi_{c+1} + noise` with
/// `V = 1/sqrt(R)`, `phi = 1`. The first predictor carries `xi_i`; the clutter
/// scores `eta` are independent of every predictor, so adding their
/// components after the first one can only hurt out-of-sample prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankOneFixtureConfig {
    pub n: usize,
    pub regions: usize,
    pub omega_points: usize,
    pub s_points: usize,
    pub g_points: usize,
    pub signal_sd: f64,
    pub clutter_sd: Vec<f64>,
    pub noise_sd: f64,
    pub predictor_noise_sd: f64,
    pub n_predictors: usize,
    pub seed: u64,
}

impl Default for RankOneFixtureConfig {
    fn default() -> Self {
        RankOneFixtureConfig {
            n: 40,
            regions: 4,
            omega_points: 11,
            s_points: 21,
            g_points: 21,
            signal_sd: 3.0,
            clutter_sd: vec![1.5, 1.0],
            noise_sd: 0.05,
            predictor_noise_sd: 0.05,
            n_predictors: 3,
            seed: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFixture {
    pub tensor: HybridTensor,
    pub predictors: Vec<FunctionalSample>,
    /// The predictable scores `xi_i`.
    pub signal_scores: Vec<f64>,
}

pub fn rank_one_fixture(config: &RankOneFixtureConfig) -> Result<RankOneFixture> {
    if config.n < 4 || config.regions == 0 || config.n_predictors == 0 {
        return Err(Error::InvalidConfig(
            "fixture needs n >= 4, regions >= 1 and at least one predictor".into(),
        ));
    }
    if config.clutter_sd.iter().any(|c| !(*c >= 0.0)) || !(config.signal_sd > 0.0) {
        return Err(Error::InvalidConfig("standard deviations must be nonnegative".into()));
    }
    let mut rng = rng_for(config.seed, 0);
    let mut gauss = move || rng.sample::<f64, _>(StandardNormal);
    let n = config.n;
    let nc = config.clutter_sd.len();
    let xi: Vec<f64> = (0..n).map(|_| config.signal_sd * gauss()).collect();
    let eta: Vec<f64> = (0..n * nc).map(|k| config.clutter_sd[k % nc] * gauss()).collect();
    let v = 1.0 / (config.regions as f64).sqrt();

    let omega_grid = Grid1D::uniform(0.0, 1.0, config.omega_points)?;
    let s_grid = Grid1D::uniform(0.0, 1.0, config.s_points)?;
    let s_pts = s_grid.points().to_vec();
    let mut values = Vec::with_capacity(n * config.regions * config.omega_points * config.s_points);
    for i in 0..n {
        for _ in 0..config.regions {
            for _ in 0..config.omega_points {
                for &s in &s_pts {
                    let mut y = xi[i] * fourier(1, s);
                    for c in 0..nc {
                        y += eta[i * nc + c] * fourier(c + 2, s);
                    }
                    values.push(v * y + config.noise_sd * gauss());
                }
            }
        }
    }
    let tensor = HybridTensor::new(values, n, config.regions, omega_grid, s_grid, None)?;

    let g_grid = Grid1D::uniform(0.0, 1.0, config.g_points)?;
    let g_pts = g_grid.points().to_vec();
    let terms = 5;
    let mut predictors = Vec::with_capacity(config.n_predictors);
    for j in 0..config.n_predictors {
        let mut coef = vec![0.0; n * terms];
        for i in 0..n {
            for k in 0..terms {
                coef[i * terms + k] = if j == 0 {
                    config.predictor_noise_sd * gauss()
                } else {
                    gauss() / (1.0 + k.div_ceil(2) as f64)
                };
            }
            if j == 0 {
                coef[i * terms + 1] += xi[i] / config.signal_sd;
            }
        }
        predictors.push(FunctionalSample::from_fn(n, g_grid.clone(), |i, a| {
            (0..terms).map(|k| coef[i * terms + k] * fourier(k, g_pts[a])).sum()
        })?);
    }
    Ok(RankOneFixture { tensor, predictors, signal_scores: xi })
}
