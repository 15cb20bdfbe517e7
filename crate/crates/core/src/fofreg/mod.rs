//! Function-on-multiple-functions regression
//! `W_i(s) = m(s) + sum_j int chi_ij(g) beta_j(g, s) dg + eps_i(s)`.
//!
//! Estimation compresses each predictor to functional principal component scores,
//! expands the response in a B-spline basis and regresses response coefficients
//! on all scores with a ridge penalty chosen by generalized cross-validation.
//! Predictor curves are first projected onto a B-spline basis in `g`, so the
//! compression directions (and with them each `beta_j`) live exactly in the
//! tensor-product space `B_g(g) x B_s(s)`.

mod bspline;

pub use bspline::BsplineBasis;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpca::truncate_by_fve;
use crate::linalg::metric_eigen;
use crate::tensorcore::{FunctionalSample, Grid1D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FofConfig {
    pub n_basis_g: usize,
    pub n_basis_s: usize,
    /// Fraction of variance kept when compressing each predictor.
    pub predictor_fve: f64,
    /// Optional cap on the number of scores kept per predictor.
    pub max_components: Option<usize>,
    /// Candidate ridge penalties, ascending.
    pub penalty_grid: Vec<f64>,
    pub train_fraction: f64,
    pub seed: u64,
}

/// `count` log-spaced values from `10^lo` to `10^hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|j| 10f64.powf(lo + (hi - lo) * j as f64 / (count - 1) as f64))
        .collect()
}

impl Default for FofConfig {
    fn default() -> Self {
        FofConfig {
            n_basis_g: 15,
            n_basis_s: 15,
            predictor_fve: 0.95,
            max_components: None,
            penalty_grid: log_grid(-6.0, 2.0, 17),
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

impl FofConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_basis_g < 2 || self.n_basis_s < 2 {
            return Err(Error::InvalidConfig(format!(
                "basis sizes must be >= 2 (n_basis_g = {}, n_basis_s = {})",
                self.n_basis_g, self.n_basis_s
            )));
        }
        if !(self.predictor_fve > 0.0 && self.predictor_fve <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "predictor_fve must lie in (0, 1], got {}",
                self.predictor_fve
            )));
        }
        if self.max_components == Some(0) {
            return Err(Error::InvalidConfig("max_components must be >= 1".into()));
        }
        if self.penalty_grid.is_empty() {
            return Err(Error::InvalidConfig("penalty_grid is empty".into()));
        }
        if self.penalty_grid.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidConfig("penalties must be positive and finite".into()));
        }
        if self.penalty_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("penalty_grid must be sorted ascending".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Seeded subject-level split; both index lists come back sorted.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 3 {
        return Err(Error::InsufficientSubjects { needed: 3, got: n });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(2, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Functional PCA of one predictor in B-spline coefficient space.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorCompression {
    /// Training mean of the predictor on its grid.
    pub mean: Vec<f64>,
    /// Eigenfunction coefficients on the `g` basis, one column per retained score.
    pub directions: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Training standard deviation of each retained score.
    pub score_sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitDiagnostics {
    /// Training MSPE `1/(n M) sum (W - W_hat)^2`.
    pub train_mspe: f64,
    /// `(penalty, GCV)` for every candidate.
    pub gcv: Vec<(f64, f64)>,
    /// Retained scores per predictor.
    pub n_components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FofModel {
    pub response_grid: Grid1D,
    pub predictor_grid: Grid1D,
    pub intercept: Vec<f64>,
    pub g_basis: BsplineBasis,
    pub s_basis: BsplineBasis,
    /// Per-predictor `n_basis_g x n_basis_s` coefficient matrices of `beta_j`.
    pub coefficients: Vec<DMatrix<f64>>,
    pub compression: Vec<PredictorCompression>,
    pub chosen_penalty: f64,
    pub diagnostics: FitDiagnostics,
    /// `beta_j` evaluated on (predictor grid x response grid).
    beta_on_grid: Vec<DMatrix<f64>>,
}

impl FofModel {
    /// Reassembles a model from its stored parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        response_grid: Grid1D,
        predictor_grid: Grid1D,
        intercept: Vec<f64>,
        g_basis: BsplineBasis,
        s_basis: BsplineBasis,
        coefficients: Vec<DMatrix<f64>>,
        compression: Vec<PredictorCompression>,
        chosen_penalty: f64,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        if intercept.len() != response_grid.len() {
            return Err(Error::Shape("intercept does not match the response grid".into()));
        }
        if coefficients.is_empty() || coefficients.len() != compression.len() {
            return Err(Error::Shape("need one compression per coefficient surface".into()));
        }
        let bg = g_basis.matrix(predictor_grid.points())?;
        let bs = s_basis.matrix(response_grid.points())?;
        let mut beta_on_grid = Vec::with_capacity(coefficients.len());
        for (c, comp) in coefficients.iter().zip(&compression) {
            if c.nrows() != g_basis.n_basis() || c.ncols() != s_basis.n_basis() {
                return Err(Error::Shape("coefficient matrix does not match the bases".into()));
            }
            if comp.mean.len() != predictor_grid.len() {
                return Err(Error::Shape("predictor mean does not match its grid".into()));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData("non-finite coefficient".into()));
            }
            beta_on_grid.push(&bg * c * bs.transpose());
        }
        Ok(FofModel {
            response_grid,
            predictor_grid,
            intercept,
            g_basis,
            s_basis,
            coefficients,
            compression,
            chosen_penalty,
            diagnostics,
            beta_on_grid,
        })
    }

    pub fn n_predictors(&self) -> usize {
        self.coefficients.len()
    }
}

fn check_predictors(predictors: &[FunctionalSample], n: usize) -> Result<Grid1D> {
    let first = predictors
        .first()
        .ok_or_else(|| Error::InvalidConfig("at least one predictor is required".into()))?;
    for (j, p) in predictors.iter().enumerate() {
        if p.n() != n {
            return Err(Error::Shape(format!(
                "predictor {j} has {} subjects, expected {n}",
                p.n()
            )));
        }
        if p.grid().points() != first.grid().points() {
            return Err(Error::Shape(format!(
                "predictor {j} is not on the common g grid"
            )));
        }
    }
    Ok(first.grid().clone())
}

fn sample_matrix(x: &FunctionalSample) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.n(), x.grid().len(), x.values())
}

pub fn fit_fof(
    responses: &FunctionalSample,
    predictors: &[FunctionalSample],
    config: &FofConfig,
) -> Result<FofModel> {
    config.validate()?;
    let n = responses.n();
    let g_grid = check_predictors(predictors, n)?;
    let s_grid = responses.grid().clone();
    if n < 2 {
        return Err(Error::InsufficientSubjects { needed: 2, got: n });
    }
    if config.n_basis_g > g_grid.len() || config.n_basis_s > s_grid.len() {
        return Err(Error::InvalidConfig(format!(
            "basis sizes ({}, {}) exceed grid sizes ({}, {})",
            config.n_basis_g,
            config.n_basis_s,
            g_grid.len(),
            s_grid.len()
        )));
    }
    let g_basis = BsplineBasis::new(g_grid.first(), g_grid.last(), config.n_basis_g)?;
    let s_basis = BsplineBasis::new(s_grid.first(), s_grid.last(), config.n_basis_s)?;
    let bg = g_basis.matrix(g_grid.points())?;
    let bs = s_basis.matrix(s_grid.points())?;

    // quadrature-weighted projection onto the g basis
    let wg = DMatrix::from_diagonal(&DVector::from_column_slice(g_grid.weights()));
    let gram_g = bg.transpose() * &wg * &bg;
    let chol = gram_g.clone().cholesky().ok_or_else(|| Error::Numerical {
        stage: "predictor basis",
        detail: "g-basis Gram matrix is not positive definite".into(),
    })?;
    let proj_g = chol.solve(&(bg.transpose() * &wg)); // nbg x G
    let l = chol.l();

    let mut compression = Vec::with_capacity(predictors.len());
    let mut score_blocks = Vec::with_capacity(predictors.len());
    for (j, x) in predictors.iter().enumerate() {
        let mean = x.mean_curve();
        let mut xc = sample_matrix(x);
        for mut row in xc.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let coef = &xc * proj_g.transpose(); // n x nbg
        let cov = coef.transpose() * &coef / n as f64;
        let (eigenvalues, vecs) = metric_eigen(&cov, &l, false, "predictor compression")?;
        let (_, mut keep) = truncate_by_fve(&eigenvalues, config.predictor_fve);
        if let Some(cap) = config.max_components {
            keep = keep.min(cap);
        }
        let directions = vecs.columns(0, keep).into_owned();
        let scores = &coef * &gram_g * &directions; // n x keep
        let score_sd = (0..keep)
            .map(|k| (scores.column(k).norm_squared() / n as f64).sqrt())
            .collect();
        log::trace!("predictor {j}: {keep} scores");
        compression.push(PredictorCompression {
            mean,
            directions,
            eigenvalues,
            score_sd,
        });
        score_blocks.push(scores);
    }
    let n_components: Vec<usize> = score_blocks.iter().map(|b| b.ncols()).collect();
    let total: usize = n_components.iter().sum();
    if total + 1 > n {
        return Err(Error::IllPosedFit(format!(
            "{total} compressed scores plus an intercept need more than {n} subjects \
             (per predictor: {n_components:?}); lower predictor_fve or set max_components"
        )));
    }

    // standardised score matrix
    let mut z = DMatrix::zeros(n, total);
    let mut scale = Vec::with_capacity(total);
    let mut col = 0;
    for (block, comp) in score_blocks.iter().zip(&compression) {
        for k in 0..block.ncols() {
            let sd = comp.score_sd[k];
            let s = if sd > 0.0 { sd } else { 1.0 };
            scale.push(s);
            z.set_column(col, &(block.column(k) / s));
            col += 1;
        }
    }

    // response: mean curve plus least-squares coefficients on the s basis
    let intercept = responses.mean_curve();
    let mut yc = sample_matrix(responses);
    for mut row in yc.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&intercept) {
            *v -= m;
        }
    }
    let gram_s = bs.transpose() * &bs;
    let chol_s = gram_s.clone().cholesky().ok_or_else(|| Error::Numerical {
        stage: "response basis",
        detail: "s-basis Gram matrix is not positive definite".into(),
    })?;
    let cy = chol_s.solve(&(bs.transpose() * yc.transpose())).transpose(); // n x nbs
    let basis_residual = (&yc - &cy * bs.transpose()).norm_squared();

    let (gamma, chosen_penalty, gcv) = ridge_gcv(&z, &cy, &gram_s, basis_residual, &config.penalty_grid)?;

    // undo the standardisation and assemble beta_j = A_j Gamma_j
    let mut coefficients = Vec::with_capacity(predictors.len());
    let mut row = 0;
    for comp in &compression {
        let keep = comp.directions.ncols();
        let mut g = gamma.rows(row, keep).into_owned();
        for k in 0..keep {
            let s = scale[row + k];
            g.row_mut(k).scale_mut(1.0 / s);
        }
        coefficients.push(&comp.directions * g);
        row += keep;
    }

    let mut model = FofModel::from_parts(
        s_grid,
        g_grid,
        intercept,
        g_basis,
        s_basis,
        coefficients,
        compression,
        chosen_penalty,
        FitDiagnostics {
            train_mspe: 0.0,
            gcv,
            n_components,
        },
    )?;
    let fitted = predict(&model, predictors)?;
    model.diagnostics.train_mspe = crate::selection::mspe(responses, &fitted)?;
    Ok(model)
}

/// Ridge fit of `cy` on `z` for every penalty; returns the GCV-optimal weights.
///
/// Minimises `1/n ||cy - z G||^2_M + lambda ||G||^2` with residuals measured in the
/// response-basis metric `M`.
fn ridge_gcv(
    z: &DMatrix<f64>,
    cy: &DMatrix<f64>,
    metric: &DMatrix<f64>,
    basis_residual: f64,
    penalties: &[f64],
) -> Result<(DMatrix<f64>, f64, Vec<(f64, f64)>)> {
    let n = z.nrows() as f64;
    let svd = z.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical {
        stage: "ridge",
        detail: "SVD did not return U".into(),
    })?;
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::Numerical {
        stage: "ridge",
        detail: "SVD did not return V'".into(),
    })?;
    let d = &svd.singular_values;
    let uty = u.transpose() * cy; // r x nbs
    let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
    let mut trace = Vec::with_capacity(penalties.len());
    for &lambda in penalties {
        let shrink: Vec<f64> = d.iter().map(|&s| s / (s * s + n * lambda)).collect();
        let hat: Vec<f64> = d.iter().map(|&s| s * s / (s * s + n * lambda)).collect();
        let mut scaled = uty.clone();
        for (k, f) in shrink.iter().enumerate() {
            scaled.row_mut(k).scale_mut(*f);
        }
        let gamma = vt.transpose() * &scaled;
        let resid = cy - z * &gamma;
        let rss = (&resid * metric).component_mul(&resid).sum() + basis_residual;
        let df = 1.0 + hat.iter().sum::<f64>();
        let denom = 1.0 - df / n;
        let score = if denom > 0.0 {
            (rss / n) / (denom * denom)
        } else {
            f64::INFINITY
        };
        trace.push((lambda, score));
        if best.as_ref().is_none_or(|(_, b, _)| score < *b) {
            best = Some((lambda, score, gamma));
        }
    }
    let (lambda, _, gamma) = best.expect("penalty grid is nonempty");
    Ok((gamma, lambda, trace))
}

/// `W_hat_i(s) = m(s) + sum_j int (chi_ij(g) - chi_bar_j(g)) beta_j(g, s) dg`.
pub fn predict(model: &FofModel, predictors: &[FunctionalSample]) -> Result<FunctionalSample> {
    if predictors.len() != model.n_predictors() {
        return Err(Error::Shape(format!(
            "model has {} predictors, got {}",
            model.n_predictors(),
            predictors.len()
        )));
    }
    let n = predictors[0].n();
    let g = check_predictors(predictors, n)?;
    if g.points() != model.predictor_grid.points() {
        return Err(Error::Shape("predictor grid differs from the training grid".into()));
    }
    let ns = model.response_grid.len();
    let wg = g.weights();
    let mut out = DMatrix::from_fn(n, ns, |_, s| model.intercept[s]);
    for ((x, comp), beta) in predictors.iter().zip(&model.compression).zip(&model.beta_on_grid) {
        let xw = DMatrix::from_fn(n, g.len(), |i, j| (x.get(i, j) - comp.mean[j]) * wg[j]);
        out += xw * beta;
    }
    let curves: Vec<f64> = (0..n).flat_map(|i| (0..ns).map(move |s| (i, s))).map(|(i, s)| out[(i, s)]).collect();
    FunctionalSample::new(curves, n, model.response_grid.clone())
}

/// `beta_j` evaluated on the requested `g` x `s` points.
pub fn coefficient_surface(
    model: &FofModel,
    j: usize,
    g_points: &[f64],
    s_points: &[f64],
) -> Result<DMatrix<f64>> {
    let c = model.coefficients.get(j).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "predictor index {j} out of range (model has {})",
            model.n_predictors()
        ))
    })?;
    let bg = model.g_basis.matrix(g_points)?;
    let bs = model.s_basis.matrix(s_points)?;
    Ok(bg * c * bs.transpose())
}
