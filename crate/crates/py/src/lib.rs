//! Python module `detqkd`. Reports come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use detqkd::adversary::{closed_form, OptimizerConfig};
use detqkd::experiments::{self, EvanMode};
use detqkd::hilbert4::Amplitude;
use detqkd::protocol::QkdConfig;
use detqkd::schemes::{self, Bit, Detection, SchemeKind};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_bit(s: &str) -> PyResult<Bit> {
    let mut chars = s.chars();
    match (chars.next().and_then(Bit::from_symbol), chars.next()) {
        (Some(b), None) => Ok(b),
        _ => Err(value_error(format!("bit must be '+' or '-', got '{s}'"))),
    }
}

fn optimizer(restarts: usize, tolerance: f64) -> OptimizerConfig {
    OptimizerConfig {
        restarts,
        tolerance,
        ..Default::default()
    }
}

/// A two-qubit protocol scheme: pairs of signal states and Bob's two bases.
#[pyclass(name = "Scheme", frozen)]
struct PyScheme {
    inner: schemes::Scheme,
}

#[pymethods]
impl PyScheme {
    #[new]
    #[pyo3(signature = (name, k = 1.0))]
    fn new(name: &str, k: f64) -> PyResult<Self> {
        let kind: SchemeKind = name.parse().map_err(value_error)?;
        Ok(Self {
            inner: kind.build(k).map_err(value_error)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn k(&self) -> Option<f64> {
        self.inner.k()
    }

    #[getter]
    fn type_ids(&self) -> Vec<usize> {
        self.inner.type_ids().collect()
    }

    /// Amplitudes of `|type, bit>` in the canonical basis.
    fn state(&self, type_id: usize, bit: &str) -> PyResult<Vec<Amplitude>> {
        let s = self.inner.state(type_id, parse_bit(bit)?).map_err(value_error)?;
        Ok(s.amps().to_vec())
    }

    /// Bit Bob decodes from a detection such as `"B3"` or `"B'1"` once the type is known.
    fn infer(&self, detection: &str, type_id: usize) -> PyResult<String> {
        let d: Detection = detection.parse().map_err(value_error)?;
        let bit = self.inner.infer_detection(d, type_id).map_err(value_error)?;
        Ok(bit.to_string())
    }

    /// One `+`/`-` string per pair type over `B1..B4, B'1..B'4`.
    fn inference_grid(&self) -> PyResult<Vec<String>> {
        experiments::render_grid(&self.inner).map_err(value_error)
    }

    fn validate(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &experiments::validate_scheme(&self.inner))
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        match self.inner.k() {
            Some(k) => format!("Scheme('{}', k={k})", self.inner.kind()),
            None => format!("Scheme('{}')", self.inner.kind()),
        }
    }
}

/// Optimized intercept-resend attack, compared with the closed form.
#[pyfunction]
#[pyo3(signature = (scheme, restarts = 20, tolerance = 1e-6, seed = 0))]
fn optimize(py: Python<'_>, scheme: &PyScheme, restarts: usize, tolerance: f64, seed: u64) -> PyResult<PyObject> {
    let report = py
        .allow_threads(|| experiments::eve_optimize(&scheme.inner, &optimizer(restarts, tolerance), seed))
        .map_err(value_error)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (name, ks, restarts = 20, tolerance = 1e-6, seed = 0))]
fn sweep(py: Python<'_>, name: &str, ks: Vec<f64>, restarts: usize, tolerance: f64, seed: u64) -> PyResult<PyObject> {
    let kind: SchemeKind = name.parse().map_err(value_error)?;
    let report = py
        .allow_threads(|| experiments::eve_sweep(kind, &ks, &optimizer(restarts, tolerance), seed))
        .map_err(value_error)?;
    to_py(py, &report)
}

/// Helstrom odds of telling `+` photons from `-` photons.
#[pyfunction]
fn helstrom(scheme: &PyScheme) -> f64 {
    experiments::guess_report(&scheme.inner).helstrom
}

#[pyfunction]
#[pyo3(signature = (scheme, key_bits = 1000, checks = 100, evan = "none", loss = 0.0, seed = 0, restarts = 20))]
#[allow(clippy::too_many_arguments)]
fn qkd_session(
    py: Python<'_>,
    scheme: &PyScheme,
    key_bits: usize,
    checks: usize,
    evan: &str,
    loss: f64,
    seed: u64,
    restarts: usize,
) -> PyResult<PyObject> {
    let mode: EvanMode = evan.parse().map_err(value_error)?;
    let config = QkdConfig {
        key_bits,
        check_count: checks,
    };
    let run = py
        .allow_threads(|| {
            experiments::qkd_experiment(&scheme.inner, &config, mode, loss, &optimizer(restarts, 1e-6), seed)
        })
        .map_err(value_error)?;
    to_py(py, &run)
}

#[pyfunction]
#[pyo3(signature = (message, control_fraction = 0.1, evan = "none", sessions = 1, loss = 0.0, seed = 0))]
fn comm_session(
    py: Python<'_>,
    message: &str,
    control_fraction: f64,
    evan: &str,
    sessions: usize,
    loss: f64,
    seed: u64,
) -> PyResult<PyObject> {
    let bits = Bit::parse_string(message).ok_or_else(|| value_error(format!("'{message}' is not a +/- string")))?;
    let mode: EvanMode = evan.parse().map_err(value_error)?;
    let run = py
        .allow_threads(|| {
            experiments::comm_experiment(
                &bits,
                control_fraction,
                mode,
                loss,
                sessions,
                &OptimizerConfig::default(),
                seed,
            )
        })
        .map_err(value_error)?;
    to_py(py, &run)
}

#[pyfunction]
fn replay_table3(py: Python<'_>) -> PyResult<PyObject> {
    to_py(py, &experiments::replay_table3().map_err(value_error)?)
}

#[pyfunction]
fn two_pair_min_error(k: f64) -> f64 {
    closed_form::two_pair_min_error(k)
}

#[pyfunction]
fn four_pair_min_error(k: f64) -> f64 {
    closed_form::four_pair_min_error(k)
}

#[pyfunction]
fn two_pair_guess_odds(k: f64) -> f64 {
    closed_form::two_pair_guess_odds(k)
}

#[pyfunction]
fn undetected_probability(p: f64, checks: u32) -> f64 {
    closed_form::undetected_probability(p, checks)
}

#[pymodule]
#[pyo3(name = "detqkd")]
fn detqkd_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScheme>()?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(helstrom, m)?)?;
    m.add_function(wrap_pyfunction!(qkd_session, m)?)?;
    m.add_function(wrap_pyfunction!(comm_session, m)?)?;
    m.add_function(wrap_pyfunction!(replay_table3, m)?)?;
    m.add_function(wrap_pyfunction!(two_pair_min_error, m)?)?;
    m.add_function(wrap_pyfunction!(four_pair_min_error, m)?)?;
    m.add_function(wrap_pyfunction!(two_pair_guess_odds, m)?)?;
    m.add_function(wrap_pyfunction!(undetected_probability, m)?)?;
    m.add("THREE_ONE_MIN_ERROR", closed_form::THREE_ONE_MIN_ERROR)?;
    Ok(())
}
