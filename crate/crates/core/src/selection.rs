//! Choosing the number of hybrid components by prediction error.
//!
//! The tensor is decomposed once. For every prefix size `q` the reconstruction
//! is pooled to curves, a regression is fitted on the training subjects and the
//! train/test MSPE recorded; `q = 0` stands for the pooled raw data without any
//! decomposition. The selected count minimises the test MSPE.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fofreg::{fit_fof, predict, train_test_split, FofConfig};
use crate::hpca::{fit_hpca, reconstruct, HpcaConfig, HpcaModel};
use crate::pooling::pool_to_curve;
use crate::tensorcore::{FunctionalSample, HybridTensor};

/// `1/(n M) sum_i sum_m (W_i(s_m) - W_hat_i(s_m))^2`.
pub fn mspe(actual: &FunctionalSample, predicted: &FunctionalSample) -> Result<f64> {
    actual.check_conforms(predicted)?;
    let n = actual.values().len();
    if n == 0 {
        return Err(Error::Shape("empty samples".into()));
    }
    let ss: f64 = actual
        .values()
        .iter()
        .zip(predicted.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(ss / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Test MSPE indexed by `q = 0..=K*L*M`.
    pub mspe_by_q: Vec<f64>,
    pub train_mspe_by_q: Vec<f64>,
    pub q_min: usize,
    pub split_seed: u64,
    /// Wall-clock seconds spent on each `q`.
    pub seconds: Vec<f64>,
}

impl SelectionResult {
    pub fn n_components(&self) -> usize {
        self.mspe_by_q.len() - 1
    }
}

/// Index of the smallest entry; ties go to the smaller index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (q, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = q;
        }
    }
    best
}

fn check_inputs(tensor: &HybridTensor, predictors: &[FunctionalSample]) -> Result<()> {
    if predictors.is_empty() {
        return Err(Error::InvalidConfig("at least one predictor is required".into()));
    }
    for (j, p) in predictors.iter().enumerate() {
        if p.n() != tensor.n() {
            return Err(Error::Shape(format!(
                "predictor {j} has {} subjects but the tensor has {}",
                p.n(),
                tensor.n()
            )));
        }
    }
    Ok(())
}

/// Runs the selection loop on an already fitted decomposition.
pub fn select_with_model(
    model: &HpcaModel,
    tensor: &HybridTensor,
    predictors: &[FunctionalSample],
    fof_config: &FofConfig,
) -> Result<SelectionResult> {
    check_inputs(tensor, predictors)?;
    fof_config.validate()?;
    if model.n != tensor.n() {
        return Err(Error::Shape("model and tensor have different subject counts".into()));
    }
    let (train, test) = train_test_split(tensor.n(), fof_config.train_fraction, fof_config.seed)?;
    let x_train: Vec<_> = predictors.iter().map(|p| p.select(&train)).collect::<Result<_>>()?;
    let x_test: Vec<_> = predictors.iter().map(|p| p.select(&test)).collect::<Result<_>>()?;
    let qs: Vec<usize> = (0..=model.n_components()).collect();
    let per_q: Vec<(f64, f64, f64)> = qs
        .par_iter()
        .map(|&q| {
            let start = Instant::now();
            let w = if q == 0 {
                pool_to_curve(tensor)?
            } else {
                pool_to_curve(&reconstruct(model, q)?)?
            };
            let (w_train, w_test) = (w.select(&train)?, w.select(&test)?);
            let fof = fit_fof(&w_train, &x_train, fof_config)?;
            let train_err = mspe(&w_train, &predict(&fof, &x_train)?)?;
            let test_err = mspe(&w_test, &predict(&fof, &x_test)?)?;
            Ok((train_err, test_err, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let mspe_by_q: Vec<f64> = per_q.iter().map(|r| r.1).collect();
    Ok(SelectionResult {
        q_min: argmin(&mspe_by_q),
        mspe_by_q,
        train_mspe_by_q: per_q.iter().map(|r| r.0).collect(),
        split_seed: fof_config.seed,
        seconds: per_q.iter().map(|r| r.2).collect(),
    })
}

/// Decomposes `tensor` and selects the component count on one seeded split.
pub fn select_num_components(
    tensor: &HybridTensor,
    predictors: &[FunctionalSample],
    fof_config: &FofConfig,
    hpca_config: &HpcaConfig,
) -> Result<SelectionResult> {
    check_inputs(tensor, predictors)?;
    let model = fit_hpca(tensor, hpca_config)?;
    select_with_model(&model, tensor, predictors, fof_config)
}

/// Split seed of resplit `r`; resplit 0 uses the base seed itself.
pub fn resplit_seed(base: u64, r: usize) -> u64 {
    if r == 0 {
        return base;
    }
    let mut z = base.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResplitSummary {
    pub per_split: Vec<SelectionResult>,
    pub mean_train_by_q: Vec<f64>,
    pub mean_test_by_q: Vec<f64>,
    pub mean_seconds_by_q: Vec<f64>,
    /// Argmin of the mean test MSPE.
    pub q_min: usize,
}

/// Repeats the selection over `resplits` seeded train/test splits of one decomposition.
pub fn select_with_resplits(
    tensor: &HybridTensor,
    predictors: &[FunctionalSample],
    fof_config: &FofConfig,
    hpca_config: &HpcaConfig,
    resplits: usize,
) -> Result<ResplitSummary> {
    if resplits == 0 {
        return Err(Error::InvalidConfig("resplits must be >= 1".into()));
    }
    check_inputs(tensor, predictors)?;
    let model = fit_hpca(tensor, hpca_config)?;
    let per_split = (0..resplits)
        .into_par_iter()
        .map(|r| {
            let cfg = FofConfig {
                seed: resplit_seed(fof_config.seed, r),
                ..fof_config.clone()
            };
            select_with_model(&model, tensor, predictors, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let nq = model.n_components() + 1;
    let mean_of = |f: &dyn Fn(&SelectionResult) -> &Vec<f64>| -> Vec<f64> {
        (0..nq)
            .map(|q| per_split.iter().map(|s| f(s)[q]).sum::<f64>() / resplits as f64)
            .collect()
    };
    let mean_test_by_q = mean_of(&|s| &s.mspe_by_q);
    let mean_train_by_q = mean_of(&|s| &s.train_mspe_by_q);
    let mean_seconds_by_q = mean_of(&|s| &s.seconds);
    Ok(ResplitSummary {
        q_min: argmin(&mean_test_by_q),
        per_split,
        mean_train_by_q,
        mean_test_by_q,
        mean_seconds_by_q,
    })
}
