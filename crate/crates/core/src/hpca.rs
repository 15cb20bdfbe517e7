//! Hybrid principal components: marginal covariances per dimension, weighted
//! eigendecompositions, subject scores on the product basis and prefix
//! reconstructions.
//!
//! Scores are `xi_{i,klm} = sum_r int int Z_i(r, w, s) V_k(r) phi_l(w) psi_m(s) dw ds`,
//! with trapezoid quadrature over the two functional dimensions. Components are
//! ranked once after fitting; [`reconstruct`] sums the first `q` ranked terms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diag_sqrt, metric_eigen};
use crate::tensorcore::{center, Grid1D, HybridTensor, MeanArray};

/// Slack on the cumulative FVE comparison so that exact boundary hits are retained.
const FVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Region,
    Omega,
    S,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::Region => "region",
            Dimension::Omega => "omega",
            Dimension::S => "s",
        }
    }
}

/// Retained eigenvectors of one marginal covariance.
///
/// `vectors` has one column per retained component, orthonormal under the
/// dimension's inner product. `eigenvalues` and `fve` cover the full spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalBasis {
    pub dimension: Dimension,
    pub vectors: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub fve: Vec<f64>,
}

impl MarginalBasis {
    pub fn retained(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.vectors.nrows();
        &self.vectors.as_slice()[k * n..(k + 1) * n]
    }
}

/// Order in which the `K*L*M` product components enter prefix reconstructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingOrder {
    /// Descending empirical score variance, ties broken on `(k, l, m)`.
    #[default]
    Variance,
    /// Plain `(k, l, m)` order with `m` varying fastest.
    Lexicographic,
}

/// Zero-based indices of one product component `V_k phi_l psi_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub k: usize,
    pub l: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpcaConfig {
    pub fve_target: f64,
    pub ranking: RankingOrder,
}

impl Default for HpcaConfig {
    fn default() -> Self {
        HpcaConfig {
            fve_target: 0.9,
            ranking: RankingOrder::Variance,
        }
    }
}

/// A fitted decomposition.
///
/// `scores` is `n x K*L*M`, row-major, with columns in `ranking` order.
#[derive(Debug, Clone, PartialEq)]
pub struct HpcaModel {
    pub n: usize,
    pub mean: MeanArray,
    pub omega_grid: Grid1D,
    pub s_grid: Grid1D,
    pub basis_region: MarginalBasis,
    pub basis_omega: MarginalBasis,
    pub basis_s: MarginalBasis,
    pub scores: Vec<f64>,
    pub ranking: Vec<Triplet>,
    pub score_variance: Vec<f64>,
    pub config: HpcaConfig,
}

impl HpcaModel {
    pub fn k(&self) -> usize {
        self.basis_region.retained()
    }

    pub fn l(&self) -> usize {
        self.basis_omega.retained()
    }

    pub fn m(&self) -> usize {
        self.basis_s.retained()
    }

    /// Number of product components, `K * L * M`.
    pub fn n_components(&self) -> usize {
        self.ranking.len()
    }

    pub fn regions(&self) -> usize {
        self.basis_region.len()
    }

    #[inline]
    pub fn score(&self, i: usize, rank: usize) -> f64 {
        self.scores[i * self.ranking.len() + rank]
    }
}

fn check_fve(fve_target: f64) -> Result<()> {
    if !(fve_target > 0.0 && fve_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "fve_target must lie in (0, 1], got {fve_target}"
        )));
    }
    Ok(())
}

/// Marginal covariance of one dimension, contracting the other two.
///
/// * `S`: `C(a, b) = 1/n sum_i 1/R sum_r int Z(r, w, a) Z(r, w, b) dw`
/// * `Omega`: `C(a, b) = 1/n_ab sum_i 1/R sum_r int Z(r, a, s) Z(r, b, s) ds`, where
///   `n_ab` counts the subjects observing both slices
/// * `Region`: `C(a, b) = 1/n sum_i int int Z(a, w, s) Z(b, w, s) dw ds`
pub fn marginal_covariance(demeaned: &HybridTensor, dimension: Dimension) -> Result<DMatrix<f64>> {
    if demeaned.values().iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidData("NaN entry in tensor".into()));
    }
    let n = demeaned.n();
    let nr = demeaned.regions();
    let nw = demeaned.omega_grid().len();
    let ns = demeaned.s_grid().len();
    let ws = demeaned.s_grid().weights();
    let cov = match dimension {
        Dimension::S => {
            let mut c = DMatrix::zeros(ns, ns);
            for i in 0..n {
                let ww = demeaned.omega_weights(i);
                for r in 0..nr {
                    for (w, &wo) in ww.iter().enumerate() {
                        if wo == 0.0 {
                            continue;
                        }
                        let f = demeaned.fiber(i, r, w);
                        for a in 0..ns {
                            let fa = wo * f[a];
                            for b in a..ns {
                                c[(a, b)] += fa * f[b];
                            }
                        }
                    }
                }
            }
            c /= (n * nr) as f64;
            symmetrize_upper(&mut c);
            c
        }
        Dimension::Omega => {
            let mut c = DMatrix::zeros(nw, nw);
            let mut count = DMatrix::<f64>::zeros(nw, nw);
            for i in 0..n {
                for a in 0..nw {
                    if !demeaned.is_observed(i, a) {
                        continue;
                    }
                    for b in a..nw {
                        if !demeaned.is_observed(i, b) {
                            continue;
                        }
                        count[(a, b)] += 1.0;
                        let mut acc = 0.0;
                        for r in 0..nr {
                            let fa = demeaned.fiber(i, r, a);
                            let fb = demeaned.fiber(i, r, b);
                            for s in 0..ns {
                                acc += ws[s] * fa[s] * fb[s];
                            }
                        }
                        c[(a, b)] += acc / nr as f64;
                    }
                }
            }
            for a in 0..nw {
                for b in a..nw {
                    let k = count[(a, b)];
                    c[(a, b)] = if k > 0.0 { c[(a, b)] / k } else { 0.0 };
                }
            }
            symmetrize_upper(&mut c);
            c
        }
        Dimension::Region => {
            let mut c = DMatrix::zeros(nr, nr);
            for i in 0..n {
                let ww = demeaned.omega_weights(i);
                for a in 0..nr {
                    for b in a..nr {
                        let mut acc = 0.0;
                        for (w, &wo) in ww.iter().enumerate() {
                            if wo == 0.0 {
                                continue;
                            }
                            let fa = demeaned.fiber(i, a, w);
                            let fb = demeaned.fiber(i, b, w);
                            let inner: f64 = (0..ns).map(|s| ws[s] * fa[s] * fb[s]).sum();
                            acc += wo * inner;
                        }
                        c[(a, b)] += acc;
                    }
                }
            }
            c /= n as f64;
            symmetrize_upper(&mut c);
            c
        }
    };
    Ok(cov)
}

fn symmetrize_upper(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for a in 0..n {
        for b in 0..a {
            c[(a, b)] = c[(b, a)];
        }
    }
}

/// Weighted eigendecomposition of a marginal covariance, truncated at the
/// smallest count whose cumulative FVE reaches `fve_target`.
///
/// `weights` are the quadrature weights of the dimension (all ones for regions);
/// returned vectors satisfy `sum_j w_j v_a(j) v_b(j) = delta_ab`.
pub fn eigendecompose_marginal(
    dimension: Dimension,
    cov: &DMatrix<f64>,
    weights: &[f64],
    fve_target: f64,
) -> Result<MarginalBasis> {
    eigendecompose_impl(dimension, cov, weights, fve_target, false)
}

fn eigendecompose_impl(
    dimension: Dimension,
    cov: &DMatrix<f64>,
    weights: &[f64],
    fve_target: f64,
    allow_indefinite: bool,
) -> Result<MarginalBasis> {
    check_fve(fve_target)?;
    if cov.nrows() != cov.ncols() || cov.nrows() != weights.len() {
        return Err(Error::Shape(format!(
            "{}x{} covariance with {} weights",
            cov.nrows(),
            cov.ncols(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidConfig("inner-product weights must be positive".into()));
    }
    let (eigenvalues, vecs) = metric_eigen(cov, &diag_sqrt(weights), allow_indefinite, dimension.name())?;
    let (fve, retained) = truncate_by_fve(&eigenvalues, fve_target);
    Ok(MarginalBasis {
        dimension,
        vectors: vecs.columns(0, retained).into_owned(),
        eigenvalues,
        fve,
    })
}

/// Cumulative FVE sequence and the retained count for `target`.
pub(crate) fn truncate_by_fve(eigenvalues: &[f64], target: f64) -> (Vec<f64>, usize) {
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return (vec![1.0; eigenvalues.len()], 1.min(eigenvalues.len()));
    }
    let mut acc = 0.0;
    let fve: Vec<f64> = eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            (acc / total).min(1.0)
        })
        .collect();
    let retained = fve
        .iter()
        .position(|&f| f >= target - FVE_SLACK)
        .map_or(eigenvalues.len(), |p| p + 1);
    (fve, retained)
}

/// Scores of every subject on every `(k, l, m)` product, columns in
/// lexicographic order with `m` fastest.
pub fn compute_scores(
    demeaned: &HybridTensor,
    basis_region: &MarginalBasis,
    basis_omega: &MarginalBasis,
    basis_s: &MarginalBasis,
) -> Result<Vec<f64>> {
    let nr = demeaned.regions();
    let nw = demeaned.omega_grid().len();
    let ns = demeaned.s_grid().len();
    if basis_region.len() != nr || basis_omega.len() != nw || basis_s.len() != ns {
        return Err(Error::Shape(format!(
            "bases of lengths ({}, {}, {}) for a tensor of extents ({nr}, {nw}, {ns})",
            basis_region.len(),
            basis_omega.len(),
            basis_s.len()
        )));
    }
    let (kk, ll, mm) = (basis_region.retained(), basis_omega.retained(), basis_s.retained());
    let ws = demeaned.s_grid().weights();
    // psi_m(s) * w(s), reused for every fiber.
    let psi_w: Vec<Vec<f64>> = (0..mm)
        .map(|m| basis_s.vector(m).iter().zip(ws).map(|(p, w)| p * w).collect())
        .collect();
    let mut out = Vec::with_capacity(demeaned.n() * kk * ll * mm);
    let mut a = vec![0.0; nr * nw * mm];
    let mut b = vec![0.0; nr * ll * mm];
    for i in 0..demeaned.n() {
        for r in 0..nr {
            for w in 0..nw {
                let f = demeaned.fiber(i, r, w);
                for m in 0..mm {
                    a[(r * nw + w) * mm + m] = f.iter().zip(&psi_w[m]).map(|(x, y)| x * y).sum();
                }
            }
        }
        let ww = demeaned.omega_weights(i);
        b.fill(0.0);
        for r in 0..nr {
            for l in 0..ll {
                let phi = basis_omega.vector(l);
                for w in 0..nw {
                    let c = ww[w] * phi[w];
                    if c == 0.0 {
                        continue;
                    }
                    for m in 0..mm {
                        b[(r * ll + l) * mm + m] += c * a[(r * nw + w) * mm + m];
                    }
                }
            }
        }
        for k in 0..kk {
            let v = basis_region.vector(k);
            for l in 0..ll {
                for m in 0..mm {
                    out.push((0..nr).map(|r| v[r] * b[(r * ll + l) * mm + m]).sum());
                }
            }
        }
    }
    Ok(out)
}

/// Centers, decomposes each dimension at `config.fve_target`, scores and ranks.
pub fn fit_hpca(tensor: &HybridTensor, config: &HpcaConfig) -> Result<HpcaModel> {
    check_fve(config.fve_target)?;
    let (mean, z) = center(tensor)?;
    let masked = z.mask().is_some();
    let (cov_r, (cov_w, cov_s)) = rayon::join(
        || marginal_covariance(&z, Dimension::Region),
        || {
            rayon::join(
                || marginal_covariance(&z, Dimension::Omega),
                || marginal_covariance(&z, Dimension::S),
            )
        },
    );
    let ones = vec![1.0; z.regions()];
    let basis_region = eigendecompose_impl(Dimension::Region, &cov_r?, &ones, config.fve_target, false)?;
    let basis_omega = eigendecompose_impl(
        Dimension::Omega,
        &cov_w?,
        z.omega_grid().weights(),
        config.fve_target,
        masked,
    )?;
    let basis_s = eigendecompose_impl(
        Dimension::S,
        &cov_s?,
        z.s_grid().weights(),
        config.fve_target,
        false,
    )?;
    let raw = compute_scores(&z, &basis_region, &basis_omega, &basis_s)?;
    let (kk, ll, mm) = (basis_region.retained(), basis_omega.retained(), basis_s.retained());
    let p = kk * ll * mm;
    let n = z.n();
    let lex: Vec<Triplet> = (0..kk)
        .flat_map(|k| (0..ll).flat_map(move |l| (0..mm).map(move |m| Triplet { k, l, m })))
        .collect();
    let variance: Vec<f64> = (0..p)
        .map(|c| {
            let mean = (0..n).map(|i| raw[i * p + c]).sum::<f64>() / n as f64;
            (0..n).map(|i| (raw[i * p + c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    if config.ranking == RankingOrder::Variance {
        order.sort_by(|&a, &b| {
            variance[b]
                .partial_cmp(&variance[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(lex[a].cmp(&lex[b]))
        });
    }
    let mut scores = Vec::with_capacity(n * p);
    for i in 0..n {
        scores.extend(order.iter().map(|&c| raw[i * p + c]));
    }
    log::debug!("hpca fit: K = {kk}, L = {ll}, M = {mm}");
    Ok(HpcaModel {
        n,
        mean,
        omega_grid: z.omega_grid().clone(),
        s_grid: z.s_grid().clone(),
        basis_region,
        basis_omega,
        basis_s,
        scores,
        ranking: order.iter().map(|&c| lex[c]).collect(),
        score_variance: order.iter().map(|&c| variance[c]).collect(),
        config: *config,
    })
}

pub(crate) fn check_q(model: &HpcaModel, q: usize) -> Result<()> {
    if q == 0 || q > model.n_components() {
        return Err(Error::InvalidConfig(format!(
            "q must lie in 1..={}, got {q}",
            model.n_components()
        )));
    }
    Ok(())
}

/// Demeaned reconstruction from the first `q` ranked components (mean not added).
pub fn reconstruct(model: &HpcaModel, q: usize) -> Result<HybridTensor> {
    check_q(model, q)?;
    let nr = model.regions();
    let nw = model.omega_grid.len();
    let ns = model.s_grid.len();
    let mut values = vec![0.0; model.n * nr * nw * ns];
    let block = nr * nw * ns;
    for (rank, t) in model.ranking.iter().take(q).enumerate() {
        let v = model.basis_region.vector(t.k);
        let phi = model.basis_omega.vector(t.l);
        let psi = model.basis_s.vector(t.m);
        for i in 0..model.n {
            let xi = model.score(i, rank);
            if xi == 0.0 {
                continue;
            }
            let out = &mut values[i * block..(i + 1) * block];
            for r in 0..nr {
                let a = xi * v[r];
                for w in 0..nw {
                    let b = a * phi[w];
                    let row = &mut out[(r * nw + w) * ns..(r * nw + w + 1) * ns];
                    for (x, p) in row.iter_mut().zip(psi) {
                        *x += b * p;
                    }
                }
            }
        }
    }
    HybridTensor::new(
        values,
        model.n,
        nr,
        model.omega_grid.clone(),
        model.s_grid.clone(),
        None,
    )
}
