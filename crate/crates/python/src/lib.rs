//! Python bindings. Build the cdylib and import it as `bdar`.
//!
//! Structured results (stationarity, selection, diagnostics) come back as
//! plain dicts decoded from the same JSON the CLI writes.

use bdar::diagnostics::diagnose as diagnose_fit;
use bdar::inference::asymptotic_se;
use bdar::model::{simulate_path, SimulationOptions, DEFAULT_BURN_IN};
use bdar::selection::select_order as select;
use bdar::stationarity::stationarity_report;
use bdar::{BdarError, BdarParams, ErrorCategory, FitResult, InnovationSpec, SearchConfig, TimeSeries};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: BdarError) -> PyErr {
    let msg = format!("{}: {}", e.tag(), e);
    match e.category() {
        ErrorCategory::Data => PyValueError::new_err(msg),
        ErrorCategory::Numerical => PyRuntimeError::new_err(msg),
    }
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn innovations(nu: Option<f64>) -> InnovationSpec {
    match nu {
        Some(nu) => InnovationSpec::StandardizedStudentT { nu },
        None => InnovationSpec::StandardNormal,
    }
}

fn search_config(n: usize, d_max: usize, fast: bool) -> SearchConfig {
    let mut cfg = if fast { SearchConfig::fast(n) } else { SearchConfig::default() };
    cfg.d_max = d_max;
    cfg
}

/// Two-regime parameter set; regime 1 is the lower regime.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: BdarParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (p, d, phi1, alpha1, phi2, alpha2, r_lower, r_upper))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        p: usize,
        d: usize,
        phi1: Vec<f64>,
        alpha1: Vec<f64>,
        phi2: Vec<f64>,
        alpha2: Vec<f64>,
        r_lower: f64,
        r_upper: f64,
    ) -> PyResult<Self> {
        let inner = BdarParams { p, d, phi1, alpha1, phi2, alpha2, r_lower, r_upper };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn reference_design() -> Self {
        Self { inner: BdarParams::reference_design() }
    }

    #[staticmethod]
    fn weekly_returns_fit() -> Self {
        Self { inner: BdarParams::weekly_returns_fit() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: BdarParams = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("params serialize")
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }
    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }
    #[getter]
    fn phi1(&self) -> Vec<f64> {
        self.inner.phi1.clone()
    }
    #[getter]
    fn alpha1(&self) -> Vec<f64> {
        self.inner.alpha1.clone()
    }
    #[getter]
    fn phi2(&self) -> Vec<f64> {
        self.inner.phi2.clone()
    }
    #[getter]
    fn alpha2(&self) -> Vec<f64> {
        self.inner.alpha2.clone()
    }
    #[getter]
    fn r_lower(&self) -> f64 {
        self.inner.r_lower
    }
    #[getter]
    fn r_upper(&self) -> f64 {
        self.inner.r_upper
    }

    /// Coefficients in the order phi1, alpha1, phi2, alpha2.
    fn coefficients(&self) -> Vec<f64> {
        self.inner.lambda()
    }

    fn mirrored(&self) -> Self {
        Self { inner: self.inner.mirrored() }
    }

    /// Sufficient stationarity conditions as a dict.
    #[pyo3(signature = (nu=None))]
    fn stationarity<'py>(&self, py: Python<'py>, nu: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        let rep = stationarity_report(&self.inner, &innovations(nu)).map_err(to_py)?;
        to_dict(py, &rep)
    }

    fn __repr__(&self) -> String {
        format!("Params({})", self.to_json())
    }
}

/// Fitted model with plug-in standard errors.
#[pyclass(name = "Fit", from_py_object)]
#[derive(Clone)]
struct PyFit {
    fit: FitResult,
    #[pyo3(get)]
    names: Vec<String>,
    #[pyo3(get)]
    std_errors: Vec<f64>,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn params(&self) -> PyParams {
        PyParams { inner: self.fit.params.clone() }
    }
    #[getter]
    fn neg2_loglik(&self) -> f64 {
        self.fit.neg2_loglik
    }
    #[getter]
    fn n(&self) -> usize {
        self.fit.n
    }
    #[getter]
    fn n1(&self) -> usize {
        self.fit.n1
    }
    #[getter]
    fn n2(&self) -> usize {
        self.fit.n2
    }
    #[getter]
    fn converged(&self) -> bool {
        self.fit.converged
    }
    #[getter]
    fn standardized_residuals(&self) -> Vec<f64> {
        self.fit.standardized_residuals.clone()
    }

    /// Ljung-Box and McLeod-Li tests plus ACFs as a dict.
    #[pyo3(signature = (lags=vec![6, 12], acf_lags=20))]
    fn diagnostics<'py>(&self, py: Python<'py>, lags: Vec<usize>, acf_lags: usize) -> PyResult<Bound<'py, PyAny>> {
        let rep = diagnose_fit(&self.fit, &lags, acf_lags).map_err(to_py)?;
        to_dict(py, &rep)
    }

    fn __repr__(&self) -> String {
        let p = &self.fit.params;
        format!(
            "Fit(p={}, d={}, r_lower={:.4}, r_upper={:.4}, neg2_loglik={:.3})",
            p.p, p.d, p.r_lower, p.r_upper, self.fit.neg2_loglik
        )
    }
}

/// Simulated series with its pre-sample, as a list.
#[pyfunction]
#[pyo3(signature = (params, n, seed, burn_in=DEFAULT_BURN_IN, pre_sample=None, nu=None))]
fn simulate(
    params: &PyParams,
    n: usize,
    seed: u64,
    burn_in: usize,
    pre_sample: Option<usize>,
    nu: Option<f64>,
) -> PyResult<Vec<f64>> {
    let opts = SimulationOptions { burn_in, pre_sample_len: pre_sample };
    let path = simulate_path(&params.inner, n, &innovations(nu), &opts, seed).map_err(to_py)?;
    Ok(path.series.values().to_vec())
}

/// Fits order `p`; the first `pre_sample` values only supply lags.
#[pyfunction]
#[pyo3(signature = (y, p, pre_sample=None, d_max=6, fast=true))]
fn fit(py: Python<'_>, y: Vec<f64>, p: usize, pre_sample: Option<usize>, d_max: usize, fast: bool) -> PyResult<PyFit> {
    let series = TimeSeries::new(y, pre_sample.unwrap_or(p.max(d_max))).map_err(to_py)?;
    let cfg = search_config(series.n_effective(), d_max, fast);
    let (fit, inf) = py
        .detach(|| {
            let f = bdar::fit(&series, p, &cfg)?;
            let inf = asymptotic_se(&f, &series)?;
            Ok((f, inf))
        })
        .map_err(to_py)?;
    Ok(PyFit { fit, names: inf.names, std_errors: inf.std_errors })
}

/// BIC table over p = 1..=p_max as a dict.
#[pyfunction]
#[pyo3(signature = (y, p_max, pre_sample=None, d_max=6, fast=true))]
fn select_order<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    p_max: usize,
    pre_sample: Option<usize>,
    d_max: usize,
    fast: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let series = TimeSeries::new(y, pre_sample.unwrap_or(p_max.max(d_max))).map_err(to_py)?;
    let cfg = search_config(series.n_effective(), d_max, fast);
    let mut table = py.detach(|| select(&series, p_max, &cfg)).map_err(to_py)?;
    for row in &mut table.rows {
        // the per-row fits hold every residual; keep the dict small
        if let Some(f) = row.fit.as_mut() {
            f.per_term.clear();
            f.standardized_residuals.clear();
        }
    }
    to_dict(py, &table)
}

#[pymodule(name = "bdar")]
mod bdar_module {
    #[pymodule_export]
    use super::{fit, select_order, simulate, PyFit, PyParams};
}
