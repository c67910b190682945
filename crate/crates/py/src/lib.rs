//! Python bindings: disk geometry, coefficient laws, truncated series,
//! root finding, the Monte Carlo estimators and the experiment runner.
//! Points are passed as Python `complex`; reports come back as dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use ::hyperzero as hz;
use hz::harness::{ExperimentConfig, ResultRecord};
use hz::pointproc::{BallFamily, McOptions};
use hz::roots::RootConfig;
use hz::series::TruncationPolicy;
use hz::{CoefficientLaw, Complex64, DiskPoint, SeededStream, TruncatedSeries};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn point(z: Complex64) -> PyResult<DiskPoint> {
    DiskPoint::from_complex(z).map_err(value_err)
}

fn disk_points(zs: &[Complex64]) -> PyResult<Vec<DiskPoint>> {
    zs.iter().map(|&z| point(z)).collect()
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (json,))
}

fn mc_options(tail_tolerance: f64, safety_factor: f64, quadrature_nodes: usize) -> McOptions {
    McOptions {
        tail_tolerance,
        safety_factor,
        roots: RootConfig { quadrature_nodes, ..RootConfig::default() },
    }
}

/// A coefficient law: `Law("gaussian")`, `Law("sparse", p=0.2)`.
#[pyclass(name = "Law", module = "hyperzero", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyLaw {
    inner: CoefficientLaw,
}

#[pymethods]
impl PyLaw {
    #[new]
    #[pyo3(signature = (name, p = None))]
    fn new(name: &str, p: Option<f64>) -> PyResult<Self> {
        let params: Vec<(&str, f64)> = p.map(|p| ("p", p)).into_iter().collect();
        let inner = CoefficientLaw::from_spec(name, params).map_err(value_err)?;
        Ok(PyLaw { inner })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    /// `count` draws on stream `stream` of `seed`.
    #[pyo3(signature = (count, seed, stream = 0))]
    fn sample(&self, count: usize, seed: u64, stream: u64) -> Vec<Complex64> {
        hz::coeffs::sample_coefficients(self.inner, count, SeededStream::new(seed, stream))
    }

    /// Empirical moment checks on `samples` draws.
    #[pyo3(signature = (samples, seed, stream = 0))]
    fn moments<'py>(&self, py: Python<'py>, samples: usize, seed: u64, stream: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &hz::coeffs::verify_moments(&self.inner, samples, SeededStream::new(seed, stream)))
    }

    fn __repr__(&self) -> String {
        format!("Law('{}')", self.inner)
    }
}

/// A truncated random (or fixed) power series.
#[pyclass(name = "Series", module = "hyperzero", frozen)]
struct PySeries {
    inner: TruncatedSeries,
}

#[pymethods]
impl PySeries {
    /// Draws a series certified on `|z| ≤ radius`.
    #[staticmethod]
    #[pyo3(signature = (law, radius, seed, stream = 0, tail_tolerance = 1e-10, safety_factor = 10.0))]
    fn sample(
        law: PyRef<'_, PyLaw>,
        radius: f64,
        seed: u64,
        stream: u64,
        tail_tolerance: f64,
        safety_factor: f64,
    ) -> PyResult<Self> {
        let policy = TruncationPolicy { target_radius: radius, tail_tolerance, safety_factor };
        let inner = TruncatedSeries::sample(law.inner, &policy, SeededStream::new(seed, stream)).map_err(value_err)?;
        Ok(PySeries { inner })
    }

    /// A fixed polynomial, evaluable on `|z| ≤ tail_radius`.
    #[staticmethod]
    fn from_coefficients(coefficients: Vec<Complex64>, tail_radius: f64) -> PyResult<Self> {
        let inner = TruncatedSeries::from_coefficients(coefficients, tail_radius).map_err(value_err)?;
        Ok(PySeries { inner })
    }

    #[getter]
    fn coefficients(&self) -> Vec<Complex64> {
        self.inner.coefficients().to_vec()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn tail_radius(&self) -> f64 {
        self.inner.tail_radius()
    }

    #[getter]
    fn tail_bound(&self) -> f64 {
        self.inner.tail_bound()
    }

    fn __call__(&self, z: Complex64) -> PyResult<Complex64> {
        self.inner.evaluate(z).map_err(value_err)
    }

    /// `f_u(z) = Δ(u, z) f(φ_u(z))`.
    fn pushforward(&self, u: Complex64, z: Complex64) -> PyResult<Complex64> {
        self.inner.pushforward_evaluate(point(u)?, point(z)?).map_err(value_err)
    }

    /// Zeros with `|z| ≤ search_radius` as dicts `{location, residual, multiplicity}`.
    #[pyo3(signature = (search_radius, residual_tolerance = 1e-8))]
    fn roots<'py>(&self, py: Python<'py>, search_radius: f64, residual_tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
        let config = RootConfig { residual_tolerance, ..RootConfig::default() };
        let zeros = hz::roots::find_roots(&self.inner, search_radius, &config).map_err(runtime_err)?;
        to_py(py, &zeros)
    }

    /// Zeros in the ball `U(center, radius)`, of `f_u` when `u` is given.
    #[pyo3(signature = (center, radius, u = None, quadrature_nodes = 256))]
    fn count_in_ball(&self, center: Complex64, radius: f64, u: Option<Complex64>, quadrature_nodes: usize) -> PyResult<usize> {
        let config = RootConfig { quadrature_nodes, ..RootConfig::default() };
        let u = u.map(point).transpose()?;
        hz::roots::count_zeros_in_disk(&self.inner, point(center)?, radius, u, &config).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!("Series(degree={}, tail_radius={})", self.inner.degree(), self.inner.tail_radius())
    }
}

/// `φ_u(z) = (z − u)/(1 − ū z)`.
#[pyfunction]
fn mobius(u: Complex64, z: Complex64) -> PyResult<Complex64> {
    Ok(hz::hypgeom::mobius(point(u)?, point(z)?).to_complex())
}

#[pyfunction]
fn mobius_inverse(u: Complex64, w: Complex64) -> PyResult<Complex64> {
    Ok(hz::hypgeom::mobius_inverse(point(u)?, point(w)?).to_complex())
}

/// `Δ(u, z) = (1 − ū z)/√(1 − |u|²)`.
#[pyfunction]
fn delta(u: Complex64, z: Complex64) -> PyResult<Complex64> {
    Ok(hz::hypgeom::delta(point(u)?, point(z)?))
}

/// `1/(1 − z₁ z̄₂)`.
#[pyfunction]
fn q_covariance(z1: Complex64, z2: Complex64) -> PyResult<Complex64> {
    Ok(hz::hypgeom::q_covariance(point(z1)?, point(z2)?))
}

/// `E[f_{u₁}(z₁) conj(f_{u₂}(z₂))]`.
#[pyfunction]
fn cross_covariance(u1: Complex64, z1: Complex64, u2: Complex64, z2: Complex64) -> PyResult<Complex64> {
    Ok(hz::hypgeom::cross_covariance(point(u1)?, point(z1)?, point(u2)?, point(z2)?))
}

#[pyfunction]
fn pseudo_hyperbolic_distance(u1: Complex64, u2: Complex64) -> PyResult<f64> {
    Ok(hz::hypgeom::pseudo_hyperbolic_distance(point(u1)?, point(u2)?))
}

/// `det[c/(1 − z_i z̄_j)²]`.
#[pyfunction]
#[pyo3(signature = (points, c = 1.0))]
fn kernel_determinant(points: Vec<Complex64>, c: f64) -> PyResult<f64> {
    hz::hypgeom::kernel_determinant(&disk_points(&points)?, c).map_err(value_err)
}

/// `Σ_k |α_k(u, z)|^p` in closed form.
#[pyfunction]
fn alpha_power_sum(u: Complex64, z: Complex64, p: f64) -> PyResult<f64> {
    hz::series::alpha_power_sum(point(u)?, point(z)?, p).map_err(value_err)
}

/// `P(every ball U(z_i, ε) holds a zero of f_u)`.
#[pyfunction]
#[pyo3(signature = (law, u, centers, epsilon, trials, seed, quadrature_nodes = 256))]
#[allow(clippy::too_many_arguments)]
fn joint_hit_probability<'py>(
    py: Python<'py>,
    law: PyRef<'_, PyLaw>,
    u: Complex64,
    centers: Vec<Complex64>,
    epsilon: f64,
    trials: u64,
    seed: u64,
    quadrature_nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let balls = BallFamily::new(disk_points(&centers)?, epsilon).map_err(value_err)?;
    let opts = mc_options(1e-10, 10.0, quadrature_nodes);
    let (law, u) = (law.inner, point(u)?);
    let est = py
        .detach(|| hz::pointproc::joint_hit_probability(law, u, &balls, trials, seed, &opts))
        .map_err(runtime_err)?;
    to_py(py, &est)
}

/// ε^{-2n}-scaled hit probabilities on a (u, ε) grid and their ε → 0 fit.
#[pyfunction]
#[pyo3(signature = (law, u_sequence, epsilons, centers, trials, seed, quadrature_nodes = 256))]
#[allow(clippy::too_many_arguments)]
fn correlation_limit<'py>(
    py: Python<'py>,
    law: PyRef<'_, PyLaw>,
    u_sequence: Vec<Complex64>,
    epsilons: Vec<f64>,
    centers: Vec<Complex64>,
    trials: u64,
    seed: u64,
    quadrature_nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let (us, cs) = (disk_points(&u_sequence)?, disk_points(&centers)?);
    let opts = mc_options(1e-10, 10.0, quadrature_nodes);
    let law = law.inner;
    let report = py
        .detach(|| hz::pointproc::correlation_limit(law, &us, &epsilons, &cs, trials, seed, &opts))
        .map_err(runtime_err)?;
    to_py(py, &report)
}

/// Radial first intensity of the zeros of `f_u` on `|z| < search_radius`.
#[pyfunction]
#[pyo3(signature = (law, u, search_radius, bins, trials, seed))]
fn intensity_profile<'py>(
    py: Python<'py>,
    law: PyRef<'_, PyLaw>,
    u: Complex64,
    search_radius: f64,
    bins: usize,
    trials: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (law, u) = (law.inner, point(u)?);
    let opts = McOptions::default();
    let profile = py
        .detach(|| hz::pointproc::intensity_profile(law, u, search_radius, bins, trials, seed, &opts))
        .map_err(runtime_err)?;
    to_py(py, &profile)
}

/// Samples of `Re Σ λ_j f_u(z_j)` with their normal-limit summary.
#[pyfunction]
#[pyo3(signature = (law, u, points, lambdas, samples, seed))]
fn clt_statistic_sample<'py>(
    py: Python<'py>,
    law: PyRef<'_, PyLaw>,
    u: Complex64,
    points: Vec<Complex64>,
    lambdas: Vec<Complex64>,
    samples: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (law, u, zs) = (law.inner, point(u)?, disk_points(&points)?);
    let opts = McOptions::default();
    let summary = py
        .detach(|| hz::pointproc::clt_statistic_sample(law, u, &zs, &lambdas, samples, seed, &opts))
        .map_err(runtime_err)?;
    to_py(py, &summary)
}

/// Dependence between the zero sets of `f_{u₁}` and `f_{u₂}` near `center`.
#[pyfunction]
#[pyo3(signature = (law, u1, u2, center, epsilon, trials, seed, quadrature_nodes = 256))]
#[allow(clippy::too_many_arguments)]
fn independence_experiment<'py>(
    py: Python<'py>,
    law: PyRef<'_, PyLaw>,
    u1: Complex64,
    u2: Complex64,
    center: Complex64,
    epsilon: f64,
    trials: u64,
    seed: u64,
    quadrature_nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let (law, u1, u2, c) = (law.inner, point(u1)?, point(u2)?, point(center)?);
    let opts = mc_options(1e-10, 10.0, quadrature_nodes);
    let report = py
        .detach(|| hz::pointproc::independence_experiment(law, u1, u2, c, epsilon, trials, seed, &opts))
        .map_err(runtime_err)?;
    to_py(py, &report)
}

/// Runs an experiment described by a TOML document; returns the result record.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyAny>> {
    let config = ExperimentConfig::from_toml_str(config_toml).map_err(value_err)?;
    let record: ResultRecord = py.detach(|| hz::harness::run(&config)).map_err(value_err)?;
    to_py(py, &record)
}

#[pymodule]
#[pyo3(name = "hyperzero")]
fn hyperzero_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLaw>()?;
    m.add_class::<PySeries>()?;
    m.add_function(wrap_pyfunction!(mobius, m)?)?;
    m.add_function(wrap_pyfunction!(mobius_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(delta, m)?)?;
    m.add_function(wrap_pyfunction!(q_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(cross_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_hyperbolic_distance, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_determinant, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_power_sum, m)?)?;
    m.add_function(wrap_pyfunction!(joint_hit_probability, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_limit, m)?)?;
    m.add_function(wrap_pyfunction!(intensity_profile, m)?)?;
    m.add_function(wrap_pyfunction!(clt_statistic_sample, m)?)?;
    m.add_function(wrap_pyfunction!(independence_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
