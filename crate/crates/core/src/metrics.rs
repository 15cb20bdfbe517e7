//! Simulation summary statistics: coefficient-surface MSE, prediction MSPE and
//! correlation, CPU/wall timing and quartile summaries.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorcore::FunctionalSample;

/// Mean squared difference of two surfaces on a common grid.
///
/// With `n_subjects = Some(n)` the result is further divided by `n`, which
/// mirrors the literal reporting formula; `None` gives the plain grid mean.
pub fn mse_beta(
    true_surface: &DMatrix<f64>,
    estimated_surface: &DMatrix<f64>,
    n_subjects: Option<usize>,
) -> Result<f64> {
    if true_surface.shape() != estimated_surface.shape() {
        return Err(Error::Shape(format!(
            "surfaces of shape {:?} and {:?}",
            true_surface.shape(),
            estimated_surface.shape()
        )));
    }
    if true_surface.is_empty() {
        return Err(Error::Shape("empty surfaces".into()));
    }
    let grid_mean = (true_surface - estimated_surface).norm_squared() / true_surface.len() as f64;
    match n_subjects {
        Some(0) => Err(Error::InvalidConfig("subject count must be positive".into())),
        Some(n) => Ok(grid_mean / n as f64),
        None => Ok(grid_mean),
    }
}

/// `1/n sum_i sum_j (D_i(s_j) - D_hat_i(s_j))^2`: summed over the grid, averaged
/// over subjects. Equals [`crate::selection::mspe`] times the grid size.
pub fn prediction_mspe(actual: &FunctionalSample, predicted: &FunctionalSample) -> Result<f64> {
    actual.check_conforms(predicted)?;
    if actual.n() == 0 {
        return Err(Error::Shape("empty samples".into()));
    }
    let ss: f64 = actual
        .values()
        .iter()
        .zip(predicted.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(ss / actual.n() as f64)
}

/// Pearson correlation of the flattened (subject x grid) arrays.
pub fn prediction_correlation(actual: &FunctionalSample, predicted: &FunctionalSample) -> Result<f64> {
    actual.check_conforms(predicted)?;
    pearson(actual.values(), predicted.values())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Shape(format!("arrays of length {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Elapsed wall time plus this thread's user/system CPU time when available.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed: f64,
    pub user: Option<f64>,
    pub system: Option<f64>,
}

#[cfg(target_os = "linux")]
fn thread_cpu() -> Option<(f64, f64)> {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    // SAFETY: getrusage only writes into the provided struct.
    let rc = unsafe { libc::getrusage(libc::RUSAGE_THREAD, usage.as_mut_ptr()) };
    if rc != 0 {
        return None;
    }
    // SAFETY: rc == 0 means the struct was filled in.
    let u = unsafe { usage.assume_init() };
    let secs = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    Some((secs(u.ru_utime), secs(u.ru_stime)))
}

#[cfg(not(target_os = "linux"))]
fn thread_cpu() -> Option<(f64, f64)> {
    None
}

/// Runs `f` and reports how long it took.
pub fn timing_capture<T>(f: impl FnOnce() -> T) -> (T, Timing) {
    let cpu0 = thread_cpu();
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed().as_secs_f64();
    let cpu1 = thread_cpu();
    let (user, system) = match (cpu0, cpu1) {
        (Some(a), Some(b)) => (Some((b.0 - a.0).max(0.0)), Some((b.1 - a.1).max(0.0))),
        _ => (None, None),
    };
    (out, Timing { elapsed, user, system })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and quartiles of the finite entries, `None` if there are none.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Some(Quartiles {
        median: percentile(&v, 0.5),
        q1: percentile(&v, 0.25),
        q3: percentile(&v, 0.75),
    })
}
