//! Python bindings. Matrices cross the boundary as nested lists of complex
//! numbers; reports come back as dicts.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qbench::benchmark::{self, BenchConfig, PnrConfig};
use qbench::canonical;
use qbench::cv::{self, CvParams, FockCutoff, QuadConfig};
use qbench::model::{self, DetTest, ProbTest};
use qbench::tensor::{self, CMat};
use qbench::{builtins, QbError};

fn err(e: QbError) -> PyErr {
    match e {
        QbError::Argument(_) | QbError::Contract(_) | QbError::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_cmat(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix must be a nonempty rectangular list of rows"));
    }
    Ok(CMat::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_cmat(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn to_dict<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import_bound("json")?.call_method1("loads", (s,))
}

/// Operator on a tensor product of subsystems.
#[pyclass(name = "Operator", module = "qbench")]
#[derive(Clone)]
struct PyOperator {
    inner: tensor::Operator,
}

#[pymethods]
impl PyOperator {
    #[new]
    #[pyo3(signature = (matrix, dims=None))]
    fn new(matrix: Vec<Vec<Complex64>>, dims: Option<Vec<usize>>) -> PyResult<Self> {
        let m = to_cmat(matrix)?;
        let dims = dims.unwrap_or_else(|| vec![m.nrows()]);
        Ok(Self { inner: tensor::Operator::new(dims, m).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("operators serialize")
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        from_cmat(self.inner.mat())
    }

    fn trace(&self) -> Complex64 {
        self.inner.trace()
    }

    fn partial_trace(&self, keep: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: tensor::partial_trace(&self.inner, &keep).map_err(err)? })
    }

    fn partial_transpose(&self, sys: usize) -> PyResult<Self> {
        Ok(Self { inner: tensor::partial_transpose(&self.inner, sys).map_err(err)? })
    }

    fn kron(&self, other: &PyOperator) -> Self {
        Self { inner: tensor::kron(&self.inner, &other.inner) }
    }

    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        Ok(tensor::hermitian_eig(&self.inner).map_err(err)?.values)
    }

    fn __repr__(&self) -> String {
        format!("Operator(dims={:?})", self.inner.dims())
    }
}

/// Quantum operation in Kraus form.
#[pyclass(name = "Channel", module = "qbench")]
#[derive(Clone)]
struct PyChannel {
    inner: model::Channel,
}

#[pymethods]
impl PyChannel {
    #[new]
    #[pyo3(signature = (kraus, trace_preserving=None))]
    fn new(kraus: Vec<Vec<Vec<Complex64>>>, trace_preserving: Option<bool>) -> PyResult<Self> {
        let ks = kraus.into_iter().map(to_cmat).collect::<PyResult<Vec<_>>>()?;
        let inner = match trace_preserving {
            Some(tp) => model::Channel::new(ks, tp),
            None => model::Channel::auto(ks),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity(d: usize) -> Self {
        Self { inner: model::Channel::identity(d) }
    }

    /// Named continuous-variable device on a Fock cutoff, e.g. `"attenuator:0.8"`.
    #[staticmethod]
    #[pyo3(signature = (spec, n_max, g=1.0))]
    fn device(spec: &str, n_max: usize, g: f64) -> PyResult<Self> {
        Ok(Self { inner: cv::device_by_name(spec, g, n_max).map_err(err)? })
    }

    #[getter]
    fn trace_preserving(&self) -> bool {
        self.inner.trace_preserving()
    }

    fn kraus(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.inner.kraus().iter().map(from_cmat).collect()
    }

    fn apply(&self, rho: &PyOperator) -> PyResult<PyOperator> {
        Ok(PyOperator { inner: model::apply_channel(&self.inner, &rho.inner).map_err(err)? })
    }

    /// `C = Σ 𝒞(|i⟩⟨j|) ⊗ |j⟩⟨i|` on `[A', A]`.
    fn jamiolkowski(&self) -> PyOperator {
        PyOperator { inner: model::jamiolkowski(&self.inner) }
    }

    fn scaled(&self, q: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.scaled(q).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Channel(d_in={}, d_out={}, kraus={}, trace_preserving={})",
            self.inner.dims_in(),
            self.inner.dims_out(),
            self.inner.kraus().len(),
            self.inner.trace_preserving()
        )
    }
}

/// Built-in scenario as `(omega, sigma_a)`.
#[pyfunction]
#[pyo3(signature = (name, dim=None))]
fn builtin(name: &str, dim: Option<usize>) -> PyResult<(PyOperator, PyOperator)> {
    let s = builtins::by_name(name, dim).map_err(err)?;
    Ok((PyOperator { inner: s.omega }, PyOperator { inner: s.sigma_a }))
}

#[pyfunction]
fn performance_operator(sigma_ar: &PyOperator, observable: &PyOperator) -> PyResult<PyOperator> {
    let t = DetTest::new(sigma_ar.inner.clone(), observable.inner.clone()).map_err(err)?;
    Ok(PyOperator { inner: model::performance_operator(&t).map_err(err)? })
}

/// `Tr[ΩC]` for a trace-preserving channel.
#[pyfunction]
fn score_det(omega: &PyOperator, channel: &PyChannel) -> PyResult<f64> {
    model::score_det_jam(&omega.inner, &model::jamiolkowski(&channel.inner)).map_err(err)
}

/// `(score, p_succ)` of a probabilistic test.
#[pyfunction]
fn score_prob(omega: &PyOperator, sigma_a: &PyOperator, channel: &PyChannel) -> PyResult<(f64, f64)> {
    let t = ProbTest::new(omega.inner.clone(), sigma_a.inner.clone()).map_err(err)?;
    model::score_prob(&t, &channel.inner).map_err(err)
}

fn pnr_dict<'py>(py: Python<'py>, r: &benchmark::PnrResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("value", r.value)?;
    d.set_item("lower", r.lower_bound)?;
    d.set_item("upper", r.upper_bound)?;
    d.set_item("converged", r.converged)?;
    d.set_item("certified", r.certified())?;
    d.set_item("grid", r.grid)?;
    d.set_item("a", r.maximizer_a.iter().copied().collect::<Vec<_>>())?;
    d.set_item("b", r.maximizer_b.iter().copied().collect::<Vec<_>>())?;
    Ok(d)
}

fn pnr_config(restarts: usize, seed: u64, grid_mesh: Option<f64>) -> PnrConfig {
    PnrConfig { restarts, seed, grid_mesh, ..PnrConfig::default() }
}

/// Maximum of `⟨a⊗b|m|a⊗b⟩` over product unit vectors.
#[pyfunction]
#[pyo3(signature = (m, restarts=64, seed=0x5eed, grid_mesh=None))]
fn product_numerical_range<'py>(
    py: Python<'py>,
    m: &PyOperator,
    restarts: usize,
    seed: u64,
    grid_mesh: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = benchmark::product_numerical_range(&m.inner, &pnr_config(restarts, seed, grid_mesh)).map_err(err)?;
    pnr_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (omega, restarts=64, seed=0x5eed))]
fn det_benchmark<'py>(py: Python<'py>, omega: &PyOperator, restarts: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = BenchConfig { pnr: pnr_config(restarts, seed, None), ..BenchConfig::default() };
    let r = benchmark::det_benchmark(&omega.inner, &cfg).map_err(err)?;
    let d = to_dict(py, &r)?;
    d.set_item("certified", r.certified())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (omega, sigma_a, restarts=64, seed=0x5eed))]
fn prob_benchmark<'py>(
    py: Python<'py>,
    omega: &PyOperator,
    sigma_a: &PyOperator,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = ProbTest::new(omega.inner.clone(), sigma_a.inner.clone()).map_err(err)?;
    let r = benchmark::prob_benchmark(&t, &pnr_config(restarts, seed, None)).map_err(err)?;
    pnr_dict(py, &r)
}

/// Canonical test for `Ω` with input marginal `τ_A`: returns
/// `(input_state, observable)` with the input as a flat amplitude list.
#[pyfunction]
fn canonical_test(omega: &PyOperator, tau_a: &PyOperator) -> PyResult<(Vec<Complex64>, PyOperator)> {
    let r = canonical::canonical_det_test(&omega.inner, &tau_a.inner).map_err(err)?;
    Ok((r.input_state.vector().iter().copied().collect(), PyOperator { inner: r.observable }))
}

/// Single-setup continuous-variable benchmark run, with the oracle value
/// unless `oracle=False`.
#[pyfunction]
#[pyo3(signature = (device, g=1.0, lam=1.0, mu=None, conjugate=false, n_max=40, oracle=true, nodes=24))]
#[allow(clippy::too_many_arguments)]
fn cv_run<'py>(
    py: Python<'py>,
    device: &PyChannel,
    g: f64,
    lam: f64,
    mu: Option<f64>,
    conjugate: bool,
    n_max: usize,
    oracle: bool,
    nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let params = CvParams::new(g, lam, mu, conjugate).map_err(err)?;
    let cutoff = FockCutoff::with_n_max(n_max).map_err(err)?;
    let setup = cv::build_setup(params, cutoff).map_err(err)?;
    let run = cv::run_setup(&setup, &device.inner).map_err(err)?;
    let d = to_dict(py, &run)?;
    d.set_item("branch", to_dict(py, &setup.branch)?)?;
    if oracle {
        let quad = QuadConfig { nodes, ..QuadConfig::default() };
        let o = cv::average_fidelity_oracle(&device.inner, &params, &cutoff, &quad).map_err(err)?;
        d.set_item("oracle", o.value)?;
        d.set_item("oracle_truncation_bound", o.truncation_bound)?;
    }
    Ok(d)
}

#[pymodule]
fn qbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_class::<PyChannel>()?;
    m.add_function(wrap_pyfunction!(builtin, m)?)?;
    m.add_function(wrap_pyfunction!(performance_operator, m)?)?;
    m.add_function(wrap_pyfunction!(score_det, m)?)?;
    m.add_function(wrap_pyfunction!(score_prob, m)?)?;
    m.add_function(wrap_pyfunction!(product_numerical_range, m)?)?;
    m.add_function(wrap_pyfunction!(det_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(prob_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_test, m)?)?;
    m.add_function(wrap_pyfunction!(cv_run, m)?)?;
    Ok(())
}
