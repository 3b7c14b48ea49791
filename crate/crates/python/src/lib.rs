//! Python bindings: `import stable_cir_py`.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stable_cir::experiments::{ks_normal as core_ks, run_experiment as core_run, ExperimentConfig};
use stable_cir::inference::{estimate_sigma2 as core_sigma2, mle_b, Method};
use stable_cir::io::{path_to_csv, read_path, write_path};
use stable_cir::model::{classify, mean_y, theta0, Regime};
use stable_cir::oracle::run_oracle_suite;
use stable_cir::simulate::{simulate_path_with, SimOptions, DEFAULT_KAPPA};
use stable_cir::transforms;
use stable_cir::Error;

fn to_py(e: Error) -> PyErr {
    if e.is_numeric_fault() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

#[pyclass(name = "ModelParams", module = "stable_cir_py", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyParams(stable_cir::ModelParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (a, b, sigma, delta, alpha, y0))]
    fn new(a: f64, b: f64, sigma: f64, delta: f64, alpha: f64, y0: f64) -> PyResult<Self> {
        stable_cir::ModelParams::new(a, b, sigma, delta, alpha, y0)
            .map(PyParams)
            .map_err(to_py)
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }
    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }
    #[getter]
    fn y0(&self) -> f64 {
        self.0.y0
    }

    /// "subcritical", "critical" or "supercritical".
    fn regime(&self) -> &'static str {
        match classify(&self.0) {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }

    fn theta0(&self) -> PyResult<f64> {
        theta0(&self.0).map_err(to_py)
    }

    fn mean(&self, t: f64) -> f64 {
        mean_y(&self.0, t)
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "ModelParams(a={}, b={}, sigma={}, delta={}, alpha={}, y0={})",
            p.a, p.b, p.sigma, p.delta, p.alpha, p.y0
        )
    }
}

#[pyclass(name = "Path", module = "stable_cir_py", frozen, skip_from_py_object)]
struct PyPath(stable_cir::Path);

#[pymethods]
impl PyPath {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }
    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }
    #[getter]
    fn n_steps(&self) -> usize {
        self.0.n_steps()
    }
    #[getter]
    fn projections(&self) -> usize {
        self.0.projections
    }
    #[getter]
    fn params(&self) -> PyParams {
        PyParams(self.0.params)
    }
    /// Steps whose stable increment exceeded the jump cutoff.
    #[getter]
    fn jump_steps(&self) -> Vec<usize> {
        self.0.jump_records.iter().map(|j| j.step).collect()
    }

    fn terminal(&self) -> f64 {
        self.0.terminal()
    }

    fn to_csv(&self) -> String {
        path_to_csv(&self.0)
    }

    /// Writes `file` (CSV) and `file.json` (sidecar).
    fn write(&self, file: std::path::PathBuf) -> PyResult<()> {
        write_path(&self.0, &file).map_err(to_py)
    }

    #[staticmethod]
    fn read(file: std::path::PathBuf) -> PyResult<Self> {
        read_path(&file).map(PyPath).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.values.len()
    }
}

#[pyfunction]
#[pyo3(signature = (params, T, n_steps, seed, kappa = DEFAULT_KAPPA))]
#[allow(non_snake_case)]
fn simulate(params: &PyParams, T: f64, n_steps: usize, seed: u64, kappa: f64) -> PyResult<PyPath> {
    let opts = SimOptions {
        kappa,
        ..SimOptions::default()
    };
    simulate_path_with(&params.0, T, n_steps, seed, opts)
        .map(PyPath)
        .map_err(to_py)
}

fn parse_method(method: &str) -> PyResult<Method> {
    match method {
        "full_information" => Ok(Method::FullInformation),
        "path_only" => Ok(Method::PathOnly),
        other => Err(PyValueError::new_err(format!(
            "method must be 'full_information' or 'path_only', got {other:?}"
        ))),
    }
}

/// Maximum likelihood estimate of `b`; returns a dict of report fields.
#[pyfunction]
#[pyo3(signature = (path, method = "full_information", params = None, true_b = None))]
fn estimate<'py>(
    py: Python<'py>,
    path: &PyPath,
    method: &str,
    params: Option<&PyParams>,
    true_b: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = parse_method(method)?;
    let p = params.map_or(path.0.params, |p| p.0);
    let r = mle_b(&path.0, m, &p, true_b).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("b_hat", r.b_hat)?;
    d.set_item("sigma2_hat", r.sigma2_hat)?;
    d.set_item("integral_y", r.integral_y)?;
    d.set_item("jump_integral", r.jump_integral)?;
    d.set_item("T", r.horizon)?;
    d.set_item("scaled_error_deterministic", r.scaled_error_deterministic)?;
    d.set_item("scaled_error_random", r.scaled_error_random)?;
    d.set_item("method", method)?;
    Ok(d)
}

#[pyfunction]
fn estimate_sigma2(path: &PyPath) -> PyResult<f64> {
    core_sigma2(&path.0).map_err(to_py)
}

/// `E exp(-lambda Y_t)`
#[pyfunction]
fn laplace_y(params: &PyParams, lam: f64, t: f64) -> PyResult<f64> {
    transforms::laplace_y(&params.0, lam, t).map(|r| r.value).map_err(to_py)
}

/// `E exp(u Y_t + v ∫_0^t Y_s ds)`
#[pyfunction]
fn joint_laplace(params: &PyParams, u: f64, v: f64, t: f64) -> PyResult<f64> {
    transforms::joint_laplace(&params.0, u, v, t)
        .map(|r| r.value)
        .map_err(to_py)
}

#[pyfunction]
fn stationary_laplace(params: &PyParams, lam: f64) -> PyResult<f64> {
    transforms::stationary_laplace(&params.0, lam)
        .map(|r| r.value)
        .map_err(to_py)
}

/// `E exp(u V)` for the supercritical limit `V`.
#[pyfunction]
fn laplace_v(params: &PyParams, u: f64) -> PyResult<f64> {
    transforms::laplace_v(&params.0, u).map(|r| r.value).map_err(to_py)
}

#[pyfunction]
fn k_fun(params: &PyParams, lam: f64) -> PyResult<f64> {
    transforms::k_fun(&params.0, lam).map_err(to_py)
}

#[pyfunction]
fn k_inverse(params: &PyParams, x: f64) -> PyResult<f64> {
    transforms::k_inverse(&params.0, x).map_err(to_py)
}

/// Kolmogorov–Smirnov test against N(0, 1); returns `(statistic, p_value)`.
#[pyfunction]
fn ks_normal(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    core_ks(&samples)
        .map(|r| (r.statistic, r.p_value))
        .map_err(to_py)
}

/// Runs an experiment from its JSON config; returns `(rows_csv, summary_json)`.
#[pyfunction]
#[pyo3(signature = (config_json, workers = None))]
fn run_experiment(config_json: &str, workers: Option<usize>) -> PyResult<(String, String)> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let res = core_run(&cfg, workers).map_err(to_py)?;
    let summary = res.summary_json().map_err(to_py)?;
    Ok((res.rows_csv(), summary))
}

/// Number of failing rows of the closed-form oracle comparison (0 on success).
#[pyfunction]
fn oracle_check() -> PyResult<usize> {
    let rows = run_oracle_suite().map_err(to_py)?;
    Ok(rows.iter().filter(|r| !r.pass).count())
}

#[pymodule]
fn stable_cir_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyPath>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_sigma2, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_y, m)?)?;
    m.add_function(wrap_pyfunction!(joint_laplace, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_laplace, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_v, m)?)?;
    m.add_function(wrap_pyfunction!(k_fun, m)?)?;
    m.add_function(wrap_pyfunction!(k_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(ks_normal, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
