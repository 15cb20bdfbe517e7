//! Python bindings.
//!
//! Arrays cross the boundary as (nested) lists of floats. Configuration
//! structs are passed as JSON objects and overlay the library defaults.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use hybridfpca::fofreg::{coefficient_surface, fit_fof, predict};
use hybridfpca::hpca::{fit_hpca, reconstruct};
use hybridfpca::metrics::{prediction_correlation, prediction_mspe};
use hybridfpca::pooling::{pool_reconstruction, pool_to_curve};
use hybridfpca::selection::{select_with_resplits, ResplitSummary};
use hybridfpca::simgen::{self, FofGenConfig, HybridGenConfig, RankOneFixtureConfig, ScenarioConfig};
use hybridfpca::tensorcore::make_trapezoid_grid;
use hybridfpca::{Error, FofConfig, FofModel, FunctionalSample, HpcaConfig, HpcaModel, HybridTensor};

fn to_py(err: Error) -> PyErr {
    if err.is_input_error() {
        PyValueError::new_err(err.to_string())
    } else {
        PyRuntimeError::new_err(err.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(format!("bad configuration: {e}"))
}

/// Default `T` overlaid with the keys of a JSON object.
fn overlay<T: Serialize + DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    overlay_on(T::default(), json)
}

fn overlay_on<T: Serialize + DeserializeOwned>(base: T, json: Option<&str>) -> PyResult<T> {
    let Some(text) = json else { return Ok(base) };
    let patch: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    let mut value = serde_json::to_value(base).map_err(json_err)?;
    match (value.as_object_mut(), patch) {
        (Some(obj), serde_json::Value::Object(p)) => obj.extend(p),
        _ => return Err(PyValueError::new_err("configuration must be a JSON object")),
    }
    serde_json::from_value(value).map_err(json_err)
}

fn rows(values: &[f64], width: usize) -> Vec<Vec<f64>> {
    if width == 0 {
        return Vec::new();
    }
    values.chunks(width).map(<[f64]>::to_vec).collect()
}

/// A tensor `Y[i, r, w, s]` of subjects x regions x omega grid x s grid.
#[pyclass(name = "Tensor", module = "hybridfpca_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTensor(HybridTensor);

#[pymethods]
impl PyTensor {
    /// `values` is row-major over (subject, region, omega, s). `mask[i][w]` marks observed slices.
    #[new]
    #[pyo3(signature = (values, n, regions, omega_points, s_points, mask=None))]
    fn new(
        values: Vec<f64>,
        n: usize,
        regions: usize,
        omega_points: Vec<f64>,
        s_points: Vec<f64>,
        mask: Option<Vec<Vec<bool>>>,
    ) -> PyResult<Self> {
        let wg = make_trapezoid_grid(&omega_points).map_err(to_py)?;
        let sg = make_trapezoid_grid(&s_points).map_err(to_py)?;
        let mask = mask.map(|m| m.into_iter().flatten().collect());
        HybridTensor::new(values, n, regions, wg, sg, mask).map(Self).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        let t = &self.0;
        (t.n(), t.regions(), t.omega_grid().len(), t.s_grid().len())
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn omega_points(&self) -> Vec<f64> {
        self.0.omega_grid().points().to_vec()
    }

    #[getter]
    fn s_points(&self) -> Vec<f64> {
        self.0.s_grid().points().to_vec()
    }

    fn is_observed(&self, i: usize, w: usize) -> bool {
        self.0.is_observed(i, w)
    }

    fn get(&self, i: usize, r: usize, w: usize, s: usize) -> PyResult<f64> {
        let (n, rr, nw, ns) = self.shape();
        if i >= n || r >= rr || w >= nw || s >= ns {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.get(i, r, w, s))
    }

    /// Per-subject curves over `s`, averaged over omega and regions.
    fn pool(&self) -> PyResult<PySample> {
        pool_to_curve(&self.0).map(PySample).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let (n, r, w, s) = self.shape();
        format!("Tensor(n={n}, regions={r}, omega={w}, s={s})")
    }
}

/// `n` curves on a common grid.
#[pyclass(name = "Sample", module = "hybridfpca_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySample(FunctionalSample);

#[pymethods]
impl PySample {
    #[new]
    fn new(curves: Vec<Vec<f64>>, points: Vec<f64>) -> PyResult<Self> {
        let grid = make_trapezoid_grid(&points).map_err(to_py)?;
        let n = curves.len();
        FunctionalSample::new(curves.into_iter().flatten().collect(), n, grid)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.0.grid().points().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.grid().weights().to_vec()
    }

    #[getter]
    fn curves(&self) -> Vec<Vec<f64>> {
        rows(self.0.values(), self.0.grid().len())
    }

    fn mean_curve(&self) -> Vec<f64> {
        self.0.mean_curve()
    }

    fn __repr__(&self) -> String {
        format!("Sample(n={}, points={})", self.0.n(), self.0.grid().len())
    }
}

fn samples(list: &[PyRef<'_, PySample>]) -> Vec<FunctionalSample> {
    list.iter().map(|s| s.0.clone()).collect()
}

/// A fitted hybrid decomposition.
#[pyclass(name = "HpcaModel", module = "hybridfpca_py", frozen)]
struct PyHpcaModel(HpcaModel);

#[pymethods]
impl PyHpcaModel {
    /// Retained counts `(K, L, M)` of the region, omega and s bases.
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        (self.0.k(), self.0.l(), self.0.m())
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.0.n_components()
    }

    /// `(k, l, m)` of each component, in rank order.
    #[getter]
    fn ranking(&self) -> Vec<(usize, usize, usize)> {
        self.0.ranking.iter().map(|t| (t.k, t.l, t.m)).collect()
    }

    #[getter]
    fn score_variance(&self) -> Vec<f64> {
        self.0.score_variance.clone()
    }

    /// `n x K*L*M`, columns in rank order.
    #[getter]
    fn scores(&self) -> Vec<Vec<f64>> {
        rows(&self.0.scores, self.0.n_components())
    }

    #[getter]
    fn eigenvalues(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            self.0.basis_region.eigenvalues.clone(),
            self.0.basis_omega.eigenvalues.clone(),
            self.0.basis_s.eigenvalues.clone(),
        )
    }

    /// Demeaned tensor rebuilt from the first `q` ranked components.
    fn reconstruct(&self, q: usize) -> PyResult<PyTensor> {
        reconstruct(&self.0, q).map(PyTensor).map_err(to_py)
    }

    /// Pooled curves of [`reconstruct`](Self::reconstruct) at `q`.
    fn pool(&self, q: usize) -> PyResult<PySample> {
        pool_reconstruction(&self.0, q).map(PySample).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let (k, l, m) = self.dims();
        format!("HpcaModel(K={k}, L={l}, M={m})")
    }
}

/// A fitted function-on-function regression.
#[pyclass(name = "FofModel", module = "hybridfpca_py", frozen)]
struct PyFofModel(FofModel);

#[pymethods]
impl PyFofModel {
    #[getter]
    fn intercept(&self) -> Vec<f64> {
        self.0.intercept.clone()
    }

    #[getter]
    fn penalty(&self) -> f64 {
        self.0.chosen_penalty
    }

    #[getter]
    fn train_mspe(&self) -> f64 {
        self.0.diagnostics.train_mspe
    }

    #[getter]
    fn n_predictors(&self) -> usize {
        self.0.n_predictors()
    }

    fn predict(&self, predictors: Vec<PyRef<'_, PySample>>) -> PyResult<PySample> {
        predict(&self.0, &samples(&predictors)).map(PySample).map_err(to_py)
    }

    /// `beta_j(g, s)` as a `len(g) x len(s)` nested list.
    fn coefficient_surface(&self, j: usize, g_points: Vec<f64>, s_points: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let b = coefficient_surface(&self.0, j, &g_points, &s_points).map_err(to_py)?;
        Ok((0..b.nrows()).map(|r| b.row(r).iter().copied().collect()).collect())
    }
}

/// Trapezoid weights of a strictly increasing grid.
#[pyfunction]
fn trapezoid_weights(points: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(make_trapezoid_grid(&points).map_err(to_py)?.weights().to_vec())
}

/// Fits the hybrid decomposition. `config` is a JSON object of `HpcaConfig` fields.
#[pyfunction]
#[pyo3(signature = (tensor, fve=None, config=None))]
fn decompose(py: Python<'_>, tensor: &PyTensor, fve: Option<f64>, config: Option<&str>) -> PyResult<PyHpcaModel> {
    let mut cfg: HpcaConfig = overlay(config)?;
    if let Some(f) = fve {
        cfg.fve_target = f;
    }
    let t = tensor.0.clone();
    py.detach(|| fit_hpca(&t, &cfg)).map(PyHpcaModel).map_err(to_py)
}

/// Fits `W_i(s) = m(s) + sum_j int X_ij(g) beta_j(g, s) dg + e`.
#[pyfunction]
#[pyo3(signature = (response, predictors, config=None))]
fn fit(
    py: Python<'_>,
    response: &PySample,
    predictors: Vec<PyRef<'_, PySample>>,
    config: Option<&str>,
) -> PyResult<PyFofModel> {
    let cfg: FofConfig = overlay(config)?;
    let (w, xs) = (response.0.clone(), samples(&predictors));
    py.detach(|| fit_fof(&w, &xs, &cfg)).map(PyFofModel).map_err(to_py)
}

/// Selects the number of hybrid components by test MSPE.
///
/// Returns a dict with `q_min`, `mspe_test`, `mspe_train` and `per_split_q_min`.
#[pyfunction]
#[pyo3(signature = (tensor, predictors, fve=None, seed=0, resplits=1, fof_config=None))]
fn select(
    py: Python<'_>,
    tensor: &PyTensor,
    predictors: Vec<PyRef<'_, PySample>>,
    fve: Option<f64>,
    seed: u64,
    resplits: usize,
    fof_config: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let mut fof: FofConfig = overlay(fof_config)?;
    fof.seed = seed;
    let mut hpca = HpcaConfig::default();
    if let Some(f) = fve {
        hpca.fve_target = f;
    }
    let (t, xs) = (tensor.0.clone(), samples(&predictors));
    let summary: ResplitSummary =
        py.detach(|| select_with_resplits(&t, &xs, &fof, &hpca, resplits)).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("q_min", summary.q_min)?;
    d.set_item("mspe_test", summary.mean_test_by_q)?;
    d.set_item("mspe_train", summary.mean_train_by_q)?;
    let per: Vec<usize> = summary.per_split.iter().map(|s| s.q_min).collect();
    d.set_item("per_split_q_min", per)?;
    Ok(d.into_any().unbind())
}

/// `1/n sum_i sum_j (actual - predicted)^2`.
#[pyfunction]
fn mspe(actual: &PySample, predicted: &PySample) -> PyResult<f64> {
    prediction_mspe(&actual.0, &predicted.0).map_err(to_py)
}

/// Pearson correlation of the flattened samples.
#[pyfunction]
fn correlation(actual: &PySample, predicted: &PySample) -> PyResult<f64> {
    prediction_correlation(&actual.0, &predicted.0).map_err(to_py)
}

/// Synthetic tensor; returns `(tensor, noiseless_signal)`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn generate_tensor(config: Option<&str>) -> PyResult<(PyTensor, PyTensor)> {
    let cfg: HybridGenConfig = overlay(config)?;
    let (t, truth) = simgen::gen_hybrid(&cfg).map_err(to_py)?;
    Ok((PyTensor(t), PyTensor(truth.signal)))
}

/// Synthetic regression data; returns `(predictors, response)`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn generate_regression(config: Option<&str>) -> PyResult<(Vec<PySample>, PySample)> {
    let cfg: FofGenConfig = overlay(config)?;
    let (xs, w, _) = simgen::gen_fof(&cfg).map_err(to_py)?;
    Ok((xs.into_iter().map(PySample).collect(), PySample(w)))
}

/// Tensor with one predictable component; returns `(tensor, predictors)`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn rank_one_fixture(config: Option<&str>) -> PyResult<(PyTensor, Vec<PySample>)> {
    let cfg: RankOneFixtureConfig = overlay(config)?;
    let fx = simgen::rank_one_fixture(&cfg).map_err(to_py)?;
    Ok((PyTensor(fx.tensor), fx.predictors.into_iter().map(PySample).collect()))
}

/// Runs a simulation scenario and returns its summary rows as dicts.
#[pyfunction]
#[pyo3(signature = (scenario, config=None))]
fn run_scenario(py: Python<'_>, scenario: u8, config: Option<&str>) -> PyResult<Vec<Py<PyAny>>> {
    let base = ScenarioConfig::preset(scenario).map_err(to_py)?;
    let cfg = overlay_on(base, config)?;
    let report = py.detach(|| simgen::run_scenario(&cfg)).map_err(to_py)?;
    report
        .summary_rows()
        .into_iter()
        .map(|row| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("n", row.cell.n)?;
            d.set_item("omega", &row.cell.omega)?;
            d.set_item("beta", &row.cell.beta)?;
            d.set_item("arm", &row.cell.arm)?;
            d.set_item("metric", &row.metric)?;
            d.set_item("median", row.quartiles.map(|q| q.median))?;
            d.set_item("q1", row.quartiles.map(|q| q.q1))?;
            d.set_item("q3", row.quartiles.map(|q| q.q3))?;
            d.set_item("completed", row.completed)?;
            Ok(d.into_any().unbind())
        })
        .collect()
}

#[pymodule]
fn hybridfpca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyHpcaModel>()?;
    m.add_class::<PyFofModel>()?;
    m.add_function(wrap_pyfunction!(trapezoid_weights, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(mspe, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(generate_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(generate_regression, m)?)?;
    m.add_function(wrap_pyfunction!(rank_one_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
