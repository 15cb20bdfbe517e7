use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fof::{gen_fof_with, CoefficientMode, FofGenConfig, FofTruth};
use super::hybrid::{gen_hybrid_with, HybridGenConfig, OmegaSparsity};
use super::rng_for;
use crate::error::{Error, Result};
use crate::fofreg::{coefficient_surface, fit_fof, predict, train_test_split, FofConfig};
use crate::hpca::{fit_hpca, HpcaConfig};
use crate::metrics::{mse_beta, prediction_correlation, prediction_mspe, quartiles, timing_capture, Quartiles, Timing};
use crate::pooling::{pool_reconstruction, pool_to_curve};
use crate::tensorcore::FunctionalSample;

/// Settings for one simulation study. Cells are the product of
/// `sample_sizes x omega_modes x coefficient_modes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// 1: raw pooled tensor only. 2: raw, first component and all components.
    pub scenario: u8,
    pub replicates: usize,
    pub seed: u64,
    pub sample_sizes: Vec<usize>,
    pub omega_modes: Vec<OmegaSparsity>,
    pub coefficient_modes: Vec<CoefficientMode>,
    /// `n`, `omega_sparsity` and `seed` are overridden per cell and replicate.
    pub hybrid: HybridGenConfig,
    /// `n`, `coefficient_mode` and `seed` are overridden per cell and replicate.
    pub fof_gen: FofGenConfig,
    /// `seed` is overridden per replicate.
    pub fof: FofConfig,
    pub hpca: HpcaConfig,
    /// Divide coefficient-surface MSE by the number of training subjects.
    pub mse_beta_per_subject: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::scenario1()
    }
}

impl ScenarioConfig {
    /// 2 x 2 x 2 design at desk scale.
    pub fn scenario1() -> Self {
        ScenarioConfig {
            scenario: 1,
            replicates: 20,
            seed: 1,
            sample_sizes: vec![20, 140],
            omega_modes: vec![OmegaSparsity::Complete, OmegaSparsity::Sparse { fraction: 0.5 }],
            coefficient_modes: vec![CoefficientMode::Complete, CoefficientMode::HalfSparse],
            hybrid: HybridGenConfig::default(),
            fof_gen: FofGenConfig::default(),
            fof: FofConfig::default(),
            hpca: HpcaConfig::default(),
            mse_beta_per_subject: false,
        }
    }

    /// Three pooling arms at `n = 20`.
    pub fn scenario2() -> Self {
        ScenarioConfig {
            scenario: 2,
            sample_sizes: vec![20],
            omega_modes: vec![OmegaSparsity::Complete],
            ..Self::scenario1()
        }
    }

    pub fn preset(scenario: u8) -> Result<Self> {
        match scenario {
            1 => Ok(Self::scenario1()),
            2 => Ok(Self::scenario2()),
            other => Err(Error::InvalidConfig(format!("unknown scenario {other}, expected 1 or 2"))),
        }
    }

    pub fn arms(&self) -> &'static [&'static str] {
        if self.scenario == 1 {
            &["HPCA_0"]
        } else {
            &["HPCA_0", "HPCA_1", "HPCA_All"]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !matches!(self.scenario, 1 | 2) {
            return bad("scenario must be 1 or 2");
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1");
        }
        if self.sample_sizes.is_empty() || self.omega_modes.is_empty() || self.coefficient_modes.is_empty() {
            return bad("every design factor needs at least one level");
        }
        if self.sample_sizes.iter().any(|&n| n < 4) {
            return bad("sample sizes must be >= 4");
        }
        for &n in &self.sample_sizes {
            for &omega_sparsity in &self.omega_modes {
                HybridGenConfig { n, omega_sparsity, ..self.hybrid.clone() }.validate()?;
            }
            for &coefficient_mode in &self.coefficient_modes {
                FofGenConfig { n, coefficient_mode, ..self.fof_gen.clone() }.validate()?;
            }
        }
        self.fof.validate()?;
        if !(self.hpca.fve_target > 0.0 && self.hpca.fve_target <= 1.0) {
            return bad("hpca.fve_target must lie in (0, 1]");
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(usize, OmegaSparsity, CoefficientMode)> {
        let mut out = Vec::new();
        for &n in &self.sample_sizes {
            for &w in &self.omega_modes {
                for &b in &self.coefficient_modes {
                    out.push((n, w, b));
                }
            }
        }
        out
    }
}

/// Per-predictor score cap that keeps `p * cap + 1 <= n_train - 1`.
pub fn component_budget(n_train: usize, p: usize) -> usize {
    (n_train.saturating_sub(2) / p.max(1)).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CellKey {
    pub scenario: u8,
    pub n: usize,
    pub omega: String,
    pub beta: String,
    pub arm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ArmOutcome {
    Completed { metrics: Vec<(String, f64)>, timing: Timing },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub cell: CellKey,
    pub replicate: usize,
    /// Hash of the shared response part and split; equal across the arms of one replicate.
    pub design_fingerprint: u64,
    pub outcome: ArmOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub cell: CellKey,
    pub metric: String,
    pub quartiles: Option<Quartiles>,
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    /// Ordered by cell, then replicate, then arm.
    pub records: Vec<ReplicateRecord>,
}

pub const TIMING_METRICS: [&str; 3] = ["Time_user", "Time_system", "Time_elapsed"];

impl ScenarioReport {
    fn cell_order(&self) -> Vec<CellKey> {
        let mut keys: Vec<CellKey> = Vec::new();
        for r in &self.records {
            if !keys.contains(&r.cell) {
                keys.push(r.cell.clone());
            }
        }
        keys
    }

    fn summarize(&self, timing: bool) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for key in self.cell_order() {
            let done: Vec<&ArmOutcome> = self
                .records
                .iter()
                .filter(|r| r.cell == key)
                .map(|r| &r.outcome)
                .filter(|o| matches!(o, ArmOutcome::Completed { .. }))
                .collect();
            let completed = done.len();
            let names: Vec<String> = if timing {
                TIMING_METRICS.iter().map(|s| s.to_string()).collect()
            } else {
                match done.first() {
                    Some(ArmOutcome::Completed { metrics, .. }) => metrics.iter().map(|m| m.0.clone()).collect(),
                    _ => Vec::new(),
                }
            };
            for (k, name) in names.iter().enumerate() {
                let values: Vec<f64> = done
                    .iter()
                    .filter_map(|o| match o {
                        ArmOutcome::Completed { metrics, timing: t } => {
                            if timing {
                                match k {
                                    0 => t.user,
                                    1 => t.system,
                                    _ => Some(t.elapsed),
                                }
                            } else {
                                Some(metrics[k].1)
                            }
                        }
                        ArmOutcome::Failed { .. } => None,
                    })
                    .collect();
                rows.push(SummaryRow {
                    cell: key.clone(),
                    metric: name.clone(),
                    quartiles: quartiles(&values),
                    completed,
                });
            }
        }
        rows
    }

    /// Median and quartiles of every accuracy metric per cell and arm.
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.summarize(false)
    }

    /// Same layout for CPU and wall-clock timings.
    pub fn timing_rows(&self) -> Vec<SummaryRow> {
        self.summarize(true)
    }

    /// Median of `metric` for the first cell whose arm is `arm`.
    pub fn median(&self, arm: &str, metric: &str) -> Option<f64> {
        self.summary_rows()
            .into_iter()
            .find(|r| r.cell.arm == arm && r.metric == metric)
            .and_then(|r| r.quartiles.map(|q| q.median))
    }

    pub fn failures(&self) -> Vec<&ReplicateRecord> {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, ArmOutcome::Failed { .. }))
            .collect()
    }
}

fn fingerprint(a: &FunctionalSample, train: &[usize]) -> u64 {
    // FNV-1a over the bit patterns
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    a.values().iter().for_each(|v| eat(v.to_bits()));
    train.iter().for_each(|&i| eat(i as u64));
    h
}

struct Shared<'a> {
    a: &'a FunctionalSample,
    predictors: &'a [FunctionalSample],
    truth: &'a FofTruth,
    train: &'a [usize],
    test: &'a [usize],
    fof: FofConfig,
    per_subject: bool,
}

fn evaluate_arm(w: &FunctionalSample, sh: &Shared) -> Result<(Vec<(String, f64)>, Timing)> {
    let d = w.add(sh.a)?;
    let (d_train, d_test) = (d.select(sh.train)?, d.select(sh.test)?);
    let x_train: Vec<_> = sh.predictors.iter().map(|x| x.select(sh.train)).collect::<Result<_>>()?;
    let x_test: Vec<_> = sh.predictors.iter().map(|x| x.select(sh.test)).collect::<Result<_>>()?;
    let (fitted, timing) = timing_capture(|| -> Result<_> {
        let model = fit_fof(&d_train, &x_train, &sh.fof)?;
        let p_train = predict(&model, &x_train)?;
        let p_test = predict(&model, &x_test)?;
        Ok((model, p_train, p_test))
    });
    let (model, p_train, p_test) = fitted?;

    let g_pts = sh.predictors[0].grid().points();
    let s_pts = d.grid().points();
    let divisor = sh.per_subject.then_some(sh.train.len());
    let mut metrics = Vec::with_capacity(sh.predictors.len() + 4);
    for (j, theta) in sh.truth.theta.iter().enumerate() {
        let est = coefficient_surface(&model, j, g_pts, s_pts)?;
        metrics.push((format!("MSE_beta_{}", j + 1), mse_beta(theta, &est, divisor)?));
    }
    let cor = |a, b| prediction_correlation(a, b).unwrap_or(f64::NAN);
    metrics.push(("MSPE_pred_train".into(), prediction_mspe(&d_train, &p_train)?));
    metrics.push(("MSPE_pred_test".into(), prediction_mspe(&d_test, &p_test)?));
    metrics.push(("COR_pred_train".into(), cor(&d_train, &p_train)));
    metrics.push(("COR_pred_test".into(), cor(&d_test, &p_test)));
    Ok((metrics, timing))
}

fn run_replicate(
    config: &ScenarioConfig,
    cell: (usize, OmegaSparsity, CoefficientMode),
    stream: u64,
    replicate: usize,
) -> Vec<ReplicateRecord> {
    let (n, omega, beta) = cell;
    let key = |arm: &str| CellKey {
        scenario: config.scenario,
        n,
        omega: omega.label().to_string(),
        beta: beta.label().to_string(),
        arm: arm.to_string(),
    };
    let arms = config.arms();
    let fail_all = |reason: String, fp: u64| -> Vec<ReplicateRecord> {
        arms.iter()
            .map(|arm| ReplicateRecord {
                cell: key(arm),
                replicate,
                design_fingerprint: fp,
                outcome: ArmOutcome::Failed { reason: reason.clone() },
            })
            .collect()
    };

    let mut rng = rng_for(config.seed, stream);
    let hybrid_cfg = HybridGenConfig { n, omega_sparsity: omega, ..config.hybrid.clone() };
    let fof_gen_cfg = FofGenConfig { n, coefficient_mode: beta, ..config.fof_gen.clone() };
    let generated = gen_hybrid_with(&hybrid_cfg, &mut rng)
        .and_then(|h| gen_fof_with(&fof_gen_cfg, &mut rng).map(|f| (h, f)));
    let ((tensor, _), (predictors, a, truth)) = match generated {
        Ok(g) => g,
        Err(e) => return fail_all(format!("generation: {e}"), 0),
    };
    let split_seed = rng.next_u64();
    let (train, test) = match train_test_split(n, config.fof.train_fraction, split_seed) {
        Ok(s) => s,
        Err(e) => return fail_all(format!("split: {e}"), 0),
    };
    let fp = fingerprint(&a, &train);
    let budget = component_budget(train.len(), predictors.len());
    let fof = FofConfig {
        seed: split_seed,
        max_components: Some(config.fof.max_components.map_or(budget, |c| c.min(budget))),
        ..config.fof.clone()
    };
    let shared = Shared {
        a: &a,
        predictors: &predictors,
        truth: &truth,
        train: &train,
        test: &test,
        fof,
        per_subject: config.mse_beta_per_subject,
    };

    let pooled: Result<Vec<FunctionalSample>> = (|| {
        let raw = pool_to_curve(&tensor)?;
        if config.scenario == 1 {
            return Ok(vec![raw]);
        }
        let model = fit_hpca(&tensor, &config.hpca)?;
        Ok(vec![
            raw,
            pool_reconstruction(&model, 1)?,
            pool_reconstruction(&model, model.n_components())?,
        ])
    })();
    let pooled = match pooled {
        Ok(p) => p,
        Err(e) => return fail_all(format!("decomposition: {e}"), fp),
    };
    arms.iter()
        .zip(&pooled)
        .map(|(arm, w)| {
            let outcome = match evaluate_arm(w, &shared) {
                Ok((metrics, timing)) => ArmOutcome::Completed { metrics, timing },
                Err(e) => {
                    log::warn!("scenario {} n={n} {arm} replicate {replicate} failed: {e}", config.scenario);
                    ArmOutcome::Failed { reason: e.to_string() }
                }
            };
            ReplicateRecord {
                cell: key(arm),
                replicate,
                design_fingerprint: fp,
                outcome,
            }
        })
        .collect()
}

/// Runs every cell and replicate of the study. Failed fits are recorded, not fatal.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let cells = config.cells();
    let reps = config.replicates;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..reps).map(move |r| (c, r))).collect();
    let per_job: Vec<Vec<ReplicateRecord>> = jobs
        .par_iter()
        .map(|&(c, r)| run_replicate(config, cells[c], (c * reps + r) as u64, r))
        .collect();
    // cell-major, then arm, then replicate
    let mut records = Vec::with_capacity(per_job.len() * config.arms().len());
    for c in 0..cells.len() {
        for arm in 0..config.arms().len() {
            for r in 0..reps {
                records.push(per_job[c * reps + r][arm].clone());
            }
        }
    }
    Ok(ScenarioReport { config: config.clone(), records })
}

pub fn run_scenario1(config: &ScenarioConfig) -> Result<ScenarioReport> {
    if config.scenario != 1 {
        return Err(Error::InvalidConfig("run_scenario1 needs scenario = 1".into()));
    }
    run_scenario(config)
}

pub fn run_scenario2(config: &ScenarioConfig) -> Result<ScenarioReport> {
    if config.scenario != 2 {
        return Err(Error::InvalidConfig("run_scenario2 needs scenario = 2".into()));
    }
    run_scenario(config)
}
