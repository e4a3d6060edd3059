//! Python bindings. Matrices cross the boundary as lists of rows of Python
//! complex numbers; estimates come back as dicts.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flagchain::cli::{self, RunConfig};
use flagchain::dynamics::{self, Sampling};
use flagchain::{liealg, perturbation, scenarios, ComplexMatrix, Ensemble};

fn py_err(e: flagchain::Error) -> PyErr {
    match e {
        flagchain::Error::InvalidInput { .. } | flagchain::Error::BandEdge { .. } | flagchain::Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexMatrix> {
    ComplexMatrix::from_rows(&rows).map_err(py_err)
}

fn from_matrix(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_bound_py_any(py),
            (None, Some(f)) => f.into_bound_py_any(py),
            _ => n.to_string().into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_bound_py_any(py)
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_bound_py_any(py)
        }
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn parse_ensemble(s: &str) -> PyResult<Ensemble> {
    s.parse().map_err(py_err)
}

fn sampling(steps: u64, replicas: usize, burn_in: Option<u64>, batches: usize, lam: f64) -> Sampling {
    Sampling::new(steps, replicas, burn_in.unwrap_or_else(|| dynamics::default_burn_in(lam))).with_batches(batches)
}

/// The randomly coupled wires model at energy `E` and coupling `lam`.
#[pyclass(name = "WiresModel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWiresModel {
    inner: flagchain::WiresModel,
}

#[pymethods]
impl PyWiresModel {
    #[new]
    #[pyo3(signature = (l, energy, lam, ensemble = "gaussian"))]
    fn new(l: usize, energy: f64, lam: f64, ensemble: &str) -> PyResult<Self> {
        let inner = flagchain::WiresModel::new(l, energy, lam, parse_ensemble(ensemble)?).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l()
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda()
    }

    /// Order of the rotation `R_k`, or None when it generates a circle.
    #[getter]
    fn rotation_order(&self) -> Option<u64> {
        self.inner.rotation_group().order
    }

    fn sample_w(&self, seed: u64) -> Vec<Vec<Complex64>> {
        from_matrix(&self.inner.sample_w(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    fn transfer_hat(&self, w: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(from_matrix(&self.inner.transfer_hat(&to_matrix(w)?)))
    }

    /// `R_k (1 + λ P(W))`.
    fn normal_form(&self, w: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(from_matrix(&self.inner.normal_form(&to_matrix(w)?)))
    }

    fn __repr__(&self) -> String {
        format!(
            "WiresModel(l={}, energy={}, lam={}, ensemble={:?})",
            self.inner.l(),
            self.inner.energy(),
            self.inner.lambda(),
            self.inner.spec().kind
        )
    }
}

/// An isotropic frame `(U, V)` representing a point of the flag manifold.
#[pyclass(name = "Frame", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: flagchain::IsotropicFrame,
}

#[pymethods]
impl PyFrame {
    #[new]
    fn new(u: Vec<Vec<Complex64>>, v: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let inner = flagchain::IsotropicFrame::new(to_matrix(u)?, to_matrix(v)?).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity(l: usize) -> Self {
        Self {
            inner: flagchain::IsotropicFrame::identity(l),
        }
    }

    #[staticmethod]
    fn haar(l: usize, seed: u64) -> Self {
        Self {
            inner: flagchain::IsotropicFrame::haar(l, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l()
    }

    #[getter]
    fn u(&self) -> Vec<Vec<Complex64>> {
        from_matrix(self.inner.u())
    }

    #[getter]
    fn v(&self) -> Vec<Vec<Complex64>> {
        from_matrix(self.inner.v())
    }

    /// `U*V`.
    fn relative_phase(&self) -> Vec<Vec<Complex64>> {
        from_matrix(&self.inner.relative_phase())
    }

    fn rotated(&self, theta: f64) -> Self {
        Self {
            inner: self.inner.rotated(theta),
        }
    }

    fn with_gauge(&self, phases: Vec<f64>) -> PyResult<Self> {
        if phases.len() != self.inner.l() {
            return Err(PyValueError::new_err(format!("expected {} phases", self.inner.l())));
        }
        Ok(Self {
            inner: self.inner.with_gauge(&phases),
        })
    }

    /// Gauge-invariant distance between the flags of two frames.
    fn flag_distance(&self, other: &PyFrame) -> f64 {
        self.inner.flag_distance(&other.inner)
    }

    fn fp(&self, p: usize) -> PyResult<f64> {
        if p == 0 || p > self.inner.l() {
            return Err(PyValueError::new_err(format!("p must lie in 1..={}", self.inner.l())));
        }
        Ok(perturbation::class_function_fp(&self.inner, p))
    }

    fn __repr__(&self) -> String {
        format!("Frame(l={})", self.inner.l())
    }
}

/// Image of a frame under a U(L,L) matrix.
#[pyfunction]
fn act(t: Vec<Vec<Complex64>>, frame: &PyFrame) -> PyResult<PyFrame> {
    let inner = dynamics::act(&to_matrix(t)?, &frame.inner).map_err(py_err)?;
    Ok(PyFrame { inner })
}

/// Frames `x_1, …, x_n` of the chain from `x0`.
#[pyfunction]
fn run_chain(model: &PyWiresModel, x0: &PyFrame, n: u64, seed: u64) -> PyResult<Vec<PyFrame>> {
    dynamics::run_chain(&model.inner, &x0.inner, n, ChaCha8Rng::seed_from_u64(seed))
        .map_err(py_err)?
        .map(|f| f.map(|inner| PyFrame { inner }).map_err(py_err))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (model, steps, replicas, seed, burn_in = None, batches = 1))]
fn lyapunov_qr<'py>(
    py: Python<'py>,
    model: &PyWiresModel,
    steps: u64,
    replicas: usize,
    seed: u64,
    burn_in: Option<u64>,
    batches: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = sampling(steps, replicas, burn_in, batches, model.inner.lambda());
    let m = model.inner.clone();
    let spectrum = py
        .detach(move || dynamics::lyapunov_qr(&m, &s, &mut ChaCha8Rng::seed_from_u64(seed)))
        .map_err(py_err)?;
    to_py(py, &spectrum)
}

/// The `L` non-negative exponents as Birkhoff averages of volume expansions.
#[pyfunction]
#[pyo3(signature = (model, steps, replicas, seed, burn_in = None, batches = 1))]
fn lyapunov_birkhoff<'py>(
    py: Python<'py>,
    model: &PyWiresModel,
    steps: u64,
    replicas: usize,
    seed: u64,
    burn_in: Option<u64>,
    batches: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = sampling(steps, replicas, burn_in, batches, model.inner.lambda());
    let m = model.inner.clone();
    let spectrum = py
        .detach(move || dynamics::lyapunov_birkhoff_all(&m, &s, &mut ChaCha8Rng::seed_from_u64(seed)))
        .map_err(py_err)?;
    to_py(py, &spectrum)
}

/// Birkhoff average of `F_p` along chains started from Haar frames.
#[pyfunction]
#[pyo3(signature = (model, p, steps, replicas, seed, burn_in = None))]
fn birkhoff_fp<'py>(
    py: Python<'py>,
    model: &PyWiresModel,
    p: usize,
    steps: u64,
    replicas: usize,
    seed: u64,
    burn_in: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    if p == 0 || p > model.inner.l() {
        return Err(PyValueError::new_err(format!("p must lie in 1..={}", model.inner.l())));
    }
    let s = sampling(steps, replicas, burn_in, 1, model.inner.lambda());
    let m = model.inner.clone();
    let est = py
        .detach(move || {
            dynamics::birkhoff(
                &m,
                |x| perturbation::class_function_fp(x, p),
                &s,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
        })
        .map_err(py_err)?;
    to_py(py, &est)
}

#[pyfunction]
fn gamma_perturbative(l: usize, energy: f64, lam: f64, p: usize) -> PyResult<f64> {
    perturbation::gamma_perturbative(l, energy, lam, p).map_err(py_err)
}

/// `2Lp − p²`.
#[pyfunction]
fn fp_haar_mean(l: usize, p: usize) -> f64 {
    perturbation::fp_haar_mean(l, p)
}

#[pyfunction]
#[pyo3(signature = (model, seed, frames = 20))]
fn certify_coupling<'py>(py: Python<'py>, model: &PyWiresModel, seed: u64, frames: usize) -> PyResult<Bound<'py, PyAny>> {
    let cert = liealg::certify_coupling(&model.inner, frames, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(py_err)?;
    to_py(py, &cert)
}

#[pyfunction]
#[pyo3(signature = (model, nsamples, seed, frames = perturbation::RHO0_FRAMES))]
fn check_rho0<'py>(
    py: Python<'py>,
    model: &PyWiresModel,
    nsamples: usize,
    seed: u64,
    frames: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let m = model.inner.clone();
    let check = py
        .detach(move || {
            perturbation::check_rho0_haar_with(&m, frames, nsamples, perturbation::RHO0_STEP, &mut ChaCha8Rng::seed_from_u64(seed))
        })
        .map_err(py_err)?;
    to_py(py, &check)
}

/// Birkhoff averages of `Re(z^m)` for the walk `z ↦ e^{±iπλ} z`.
#[pyfunction]
#[pyo3(signature = (lam, x0, steps, replicas, seed))]
fn circle_counterexample<'py>(
    py: Python<'py>,
    lam: f64,
    x0: Complex64,
    steps: u64,
    replicas: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = Sampling::new(steps, replicas, 0);
    let report = py
        .detach(move || scenarios::circle_counterexample(lam, x0, &s, &mut ChaCha8Rng::seed_from_u64(seed)))
        .map_err(py_err)?;
    to_py(py, &report)
}

/// Run a CLI scenario from a dict of options named like the command-line
/// flags (`scenario`, `L`, `E`, `lambda`, `steps`, `seed`, …) and return the
/// report as a dict.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, options: &Bound<'py, PyDict>) -> PyResult<Bound<'py, PyAny>> {
    let json = py.import("json")?;
    let text: String = json.call_method1("dumps", (options,))?.extract()?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let scenario = value
        .get("scenario")
        .and_then(|s| s.as_str())
        .ok_or_else(|| PyValueError::new_err("`scenario` is required"))?
        .to_string();
    let seed = value
        .get("seed")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| PyValueError::new_err("`seed` is required"))?;
    let scenario: cli::Scenario = serde_json::from_value(serde_json::Value::String(scenario))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut base = serde_json::to_value(RunConfig::new(scenario, seed)).expect("config serializes");
    if let (Some(b), Some(o)) = (base.as_object_mut(), value.as_object_mut()) {
        for (k, v) in std::mem::take(o) {
            b.insert(k, v);
        }
    }
    let config: RunConfig = serde_json::from_value(base).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.detach(move || cli::run(&config)).map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
fn pyflagchain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWiresModel>()?;
    m.add_class::<PyFrame>()?;
    m.add_function(wrap_pyfunction!(act, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_qr, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_birkhoff, m)?)?;
    m.add_function(wrap_pyfunction!(birkhoff_fp, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_perturbative, m)?)?;
    m.add_function(wrap_pyfunction!(fp_haar_mean, m)?)?;
    m.add_function(wrap_pyfunction!(certify_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(check_rho0, m)?)?;
    m.add_function(wrap_pyfunction!(circle_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
