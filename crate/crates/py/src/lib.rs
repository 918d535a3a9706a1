//! Python bindings: parameters, the quantum and classical integrators, the
//! noise model, distances and fits, and the experiment runner.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use hyperion_core::analysis::{self, ProbabilityVector};
use hyperion_core::classical::{self, ClassicalEnsemble, HistogramSpec, RecordRequest, Sampling};
use hyperion_core::environment::{self, NoiseParams, NoiseRealization};
use hyperion_core::experiment::{self, RunConfig};
use hyperion_core::hyperion as body;
use hyperion_core::hyperion::{BodyParams, DustParams};
use hyperion_core::orbit::{self, OrbitSolution};
use hyperion_core::params;
use hyperion_core::quantum::{self, EvolutionControls, Method, QuantumRecordRequest};
use hyperion_core::Error;

create_exception!(hyperion, HyperionError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::Config { .. } => PyValueError::new_err(e.to_string()),
        other => HyperionError::new_err(other.to_string()),
    }
}

/// Serializable value to a plain Python object through JSON.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| HyperionError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_method(name: &str) -> PyResult<Method> {
    match name {
        "split4" => Ok(Method::Split4),
        "split2" => Ok(Method::Split2),
        "crank_nicolson" => Ok(Method::CrankNicolson),
        "rk4_monitor" => Ok(Method::Rk4Monitor),
        _ => Err(PyValueError::new_err(format!("unknown method `{name}`"))),
    }
}

fn parse_sampling(name: &str) -> PyResult<Sampling> {
    match name {
        "random" => Ok(Sampling::Random),
        "antithetic" => Ok(Sampling::Antithetic),
        "lattice" => Ok(Sampling::Lattice),
        _ => Err(PyValueError::new_err(format!("unknown sampling `{name}`"))),
    }
}

#[pyclass(name = "SystemParams", from_py_object)]
#[derive(Clone)]
struct PySystemParams(params::SystemParams);

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (alpha, e, beta, dtau = 1e-3))]
    fn new(alpha: f64, e: f64, beta: f64, dtau: f64) -> PyResult<Self> {
        let p = params::SystemParams::new(alpha, e, beta).with_dtau(dtau);
        p.validate().map_err(to_py)?;
        Ok(PySystemParams(p))
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn e(&self) -> f64 {
        self.0.e
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn dtau(&self) -> f64 {
        self.0.dtau
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(alpha={}, e={}, beta={}, dtau={})",
            self.0.alpha, self.0.e, self.0.beta, self.0.dtau
        )
    }
}

#[pyclass(name = "InitialState", from_py_object)]
#[derive(Clone)]
struct PyInitialState(params::InitialStateSpec);

#[pymethods]
impl PyInitialState {
    #[new]
    #[pyo3(signature = (j0, sigma_j, phi0 = 0.0))]
    fn new(j0: f64, sigma_j: f64, phi0: f64) -> PyResult<Self> {
        let s = params::InitialStateSpec::new(j0, sigma_j, phi0);
        s.validate().map_err(to_py)?;
        Ok(PyInitialState(s))
    }

    fn sigma_phi(&self, beta: f64) -> f64 {
        self.0.sigma_phi(beta)
    }
}

#[pyclass(name = "Orbit")]
struct PyOrbit(OrbitSolution);

#[pymethods]
impl PyOrbit {
    #[new]
    #[pyo3(signature = (e, n_samples = orbit::DEFAULT_ORBIT_SAMPLES))]
    fn new(e: f64, n_samples: usize) -> PyResult<Self> {
        orbit::build_orbit_table(&orbit::OrbitParams { e, n_samples })
            .map(PyOrbit)
            .map_err(to_py)
    }

    /// `(r / a, true anomaly)` at `tau`.
    fn at(&self, tau: f64) -> (f64, f64) {
        let p = self.0.at(tau);
        (p.r_over_a, p.theta)
    }

    /// Tabulated `(tau, r_over_a, theta)` over one period.
    fn table(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            self.0.tau_grid(),
            self.0.r_over_a_samples().to_vec(),
            self.0.theta_samples().to_vec(),
        )
    }
}

#[pyfunction]
fn solve_kepler(e: f64, tau: f64) -> PyResult<(f64, f64)> {
    orbit::solve_kepler(e, tau).map_err(to_py)
}

#[pyclass(name = "Noise", from_py_object)]
#[derive(Clone)]
struct PyNoise(NoiseParams);

#[pymethods]
impl PyNoise {
    #[new]
    #[pyo3(signature = (sigma, tau_c, seed, c = environment::DEFAULT_RECURRENCE))]
    fn new(sigma: f64, tau_c: f64, seed: u64, c: f64) -> PyResult<Self> {
        let p = NoiseParams { c, ..NoiseParams::new(sigma, tau_c, seed) };
        p.validate().map_err(to_py)?;
        Ok(PyNoise(p))
    }

    /// Momentum diffusion parameter `D`.
    fn diffusion(&self) -> f64 {
        environment::diffusion_parameter(&self.0)
    }

    fn update_interval(&self) -> f64 {
        self.0.update_interval()
    }
}

fn realization(noise: Option<&PyNoise>, tau_end: f64, dtau: f64) -> PyResult<Option<NoiseRealization>> {
    noise
        .map(|n| environment::make_noise_realization(&n.0, tau_end, dtau))
        .transpose()
        .map_err(to_py)
}

#[pyclass(name = "ProbabilityVector", from_py_object)]
#[derive(Clone)]
struct PyProbabilityVector(ProbabilityVector);

#[pymethods]
impl PyProbabilityVector {
    #[new]
    fn new(beta: f64, m_min: i64, p: Vec<f64>) -> Self {
        PyProbabilityVector(ProbabilityVector { beta, m_min, p })
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn m_min(&self) -> i64 {
        self.0.m_min
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.0.p.clone()
    }

    fn mean_jz(&self) -> f64 {
        self.0.mean_jz()
    }

    fn total(&self) -> f64 {
        self.0.total()
    }

    fn smoothed(&self, delta_s: f64) -> PyResult<Self> {
        analysis::triangular_smooth(&self.0, delta_s)
            .map(PyProbabilityVector)
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.p.len()
    }
}

#[pyclass(name = "QuantumState")]
struct PyQuantumState(quantum::QuantumState);

#[pymethods]
impl PyQuantumState {
    /// Gaussian wave packet for `spec` in a basis `|m| <= cutoff`.
    #[new]
    #[pyo3(signature = (spec, params, cutoff = None))]
    fn new(spec: &PyInitialState, params: &PySystemParams, cutoff: Option<usize>) -> PyResult<Self> {
        let k = cutoff.unwrap_or_else(|| quantum::default_cutoff(params.0.beta));
        quantum::init_quantum_state(&spec.0, &params.0, k)
            .map(PyQuantumState)
            .map_err(to_py)
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.0.k
    }

    fn norm_sqr(&self) -> f64 {
        self.0.norm_sqr()
    }

    fn mean_jz(&self) -> f64 {
        quantum::expectation_jz(&self.0)
    }

    /// `(mean, variance)` of `Jz`.
    fn moments(&self) -> (f64, f64) {
        quantum::moments(&self.0)
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.c.clone()
    }

    fn probabilities(&self) -> PyProbabilityVector {
        PyProbabilityVector(quantum::probability_vector(&self.0))
    }

    /// Evolves to `tau_end` and returns the state there. Observables at
    /// `record_at` are returned as a dict of lists.
    #[pyo3(signature = (params, tau_end, record_at = Vec::new(), method = "split4", dtau = None, noise = None))]
    #[allow(clippy::too_many_arguments)]
    fn evolve(
        &self,
        py: Python<'_>,
        params: &PySystemParams,
        tau_end: f64,
        record_at: Vec<f64>,
        method: &str,
        dtau: Option<f64>,
        noise: Option<&PyNoise>,
    ) -> PyResult<(PyQuantumState, Py<PyAny>)> {
        let controls = EvolutionControls::new(dtau.unwrap_or(params.0.dtau)).with_method(parse_method(method)?);
        let orbit = orbit::build_orbit_table(&orbit::OrbitParams::new(params.0.e)).map_err(to_py)?;
        let drive = realization(noise, tau_end, controls.dtau)?;
        let rec = py
            .detach(|| {
                quantum::evolve_quantum_stats(
                    &self.0,
                    &params.0,
                    &orbit,
                    tau_end,
                    &controls,
                    drive.as_ref(),
                    &record_at,
                    QuantumRecordRequest::default(),
                )
            })
            .map_err(to_py)?;
        #[derive(Serialize)]
        struct Observables<'a> {
            tau: &'a [f64],
            mean_jz: &'a [f64],
            var_jz: &'a [f64],
            norm_drift: &'a [f64],
        }
        let obs = to_object(
            py,
            &Observables {
                tau: &rec.tau,
                mean_jz: &rec.mean_jz,
                var_jz: &rec.var_jz,
                norm_drift: &rec.norm_drift,
            },
        )?;
        Ok((PyQuantumState(rec.final_state), obs))
    }
}

#[pyclass(name = "Ensemble")]
struct PyEnsemble(ClassicalEnsemble);

#[pymethods]
impl PyEnsemble {
    #[new]
    #[pyo3(signature = (spec, params, n, seed, sampling = "random"))]
    fn new(spec: &PyInitialState, params: &PySystemParams, n: usize, seed: u64, sampling: &str) -> PyResult<Self> {
        classical::sample_initial_ensemble_with(&spec.0, &params.0, n, seed, parse_sampling(sampling)?)
            .map(PyEnsemble)
            .map_err(to_py)
    }

    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.0.phi.clone()
    }

    #[getter]
    fn jz(&self) -> Vec<f64> {
        self.0.jz.clone()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn histogram(&self, beta: f64, cutoff: usize) -> PyResult<PyProbabilityVector> {
        classical::histogram_jz(&self.0, beta, cutoff)
            .map(PyProbabilityVector)
            .map_err(to_py)
    }

    /// Evolves every member to `tau_end`. Returns the final ensemble and a
    /// dict with `tau`, `mean_jz` and `var_jz` at `record_at`.
    #[pyo3(signature = (params, tau_end, record_at = Vec::new(), noise = None))]
    fn evolve(
        &self,
        py: Python<'_>,
        params: &PySystemParams,
        tau_end: f64,
        record_at: Vec<f64>,
        noise: Option<&PyNoise>,
    ) -> PyResult<(PyEnsemble, Py<PyAny>)> {
        let orbit = orbit::build_orbit_table(&orbit::OrbitParams::new(params.0.e)).map_err(to_py)?;
        let drive = realization(noise, tau_end, params.0.dtau)?;
        let rec = py
            .detach(|| {
                classical::evolve_ensemble_stats(
                    &self.0,
                    &params.0,
                    &orbit,
                    tau_end,
                    drive.as_ref(),
                    &record_at,
                    RecordRequest::default(),
                )
            })
            .map_err(to_py)?;
        #[derive(Serialize)]
        struct Observables<'a> {
            tau: &'a [f64],
            mean_jz: &'a [f64],
            var_jz: &'a [f64],
        }
        let obs = to_object(
            py,
            &Observables {
                tau: &rec.tau,
                mean_jz: &rec.mean_jz,
                var_jz: &rec.var_jz,
            },
        )?;
        Ok((PyEnsemble(rec.final_state), obs))
    }

    /// Histograms of `Jz` on the `beta` lattice at each record time.
    #[pyo3(signature = (params, tau_end, record_at, cutoff))]
    fn evolve_histograms(
        &self,
        py: Python<'_>,
        params: &PySystemParams,
        tau_end: f64,
        record_at: Vec<f64>,
        cutoff: usize,
    ) -> PyResult<Vec<PyProbabilityVector>> {
        let orbit = orbit::build_orbit_table(&orbit::OrbitParams::new(params.0.e)).map_err(to_py)?;
        let request = RecordRequest {
            histogram: Some(HistogramSpec {
                beta: params.0.beta,
                k: cutoff,
            }),
            snapshots: false,
        };
        let rec = py
            .detach(|| {
                classical::evolve_ensemble_stats(&self.0, &params.0, &orbit, tau_end, None, &record_at, request)
            })
            .map_err(to_py)?;
        Ok(rec.histograms.into_iter().map(PyProbabilityVector).collect())
    }
}

/// Maximal Lyapunov exponent `(lambda, std_err)` from one start point.
#[pyfunction]
fn lyapunov_exponent(py: Python<'_>, phi: f64, jz: f64, params: &PySystemParams, tau_total: f64) -> PyResult<(f64, f64)> {
    let orbit = orbit::build_orbit_table(&orbit::OrbitParams::new(params.0.e)).map_err(to_py)?;
    let l = py
        .detach(|| classical::lyapunov_exponent((phi, jz), &params.0, &orbit, tau_total))
        .map_err(to_py)?;
    Ok((l.lambda, l.std_err))
}

#[pyfunction]
fn rotating_frame_energy(phi: f64, jz: f64, tau: f64, alpha: f64) -> f64 {
    classical::rotating_frame_energy(phi, jz, tau, alpha)
}

#[pyfunction]
#[pyo3(signature = (c, n, seed))]
fn correlated_sequence(c: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    environment::correlated_sequence(c, n, seed).map_err(to_py)
}

/// Monte-Carlo estimate `(D, std_err)` of the diffusion parameter.
#[pyfunction]
fn empirical_diffusion(noise: &PyNoise, n_walks: usize, tau_end: f64, seed: u64) -> PyResult<(f64, f64)> {
    let d = environment::empirical_diffusion(&noise.0, n_walks, tau_end, seed).map_err(to_py)?;
    Ok((d.d_hat, d.std_err))
}

#[pyfunction]
fn one_norm(a: &PyProbabilityVector, b: &PyProbabilityVector) -> PyResult<f64> {
    analysis::one_norm(&a.0, &b.0).map_err(to_py)
}

/// Least-squares `y = prefactor * x^exponent`.
#[pyfunction]
fn fit_power_law(py: Python<'_>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_object(py, &analysis::fit_power_law(&x, &y).map_err(to_py)?)
}

#[pyfunction]
fn fit_decay_time(py: Python<'_>, tau: Vec<f64>, y: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_object(py, &analysis::fit_decay_time(&tau, &y).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (mean_prefactor = body::DEFAULT_MEAN_PREFACTOR, norm_prefactor = body::DEFAULT_NORM_PREFACTOR))]
fn hyperion_report(py: Python<'_>, mean_prefactor: f64, norm_prefactor: f64) -> PyResult<Py<PyAny>> {
    let r = body::hyperion_report(&BodyParams::hyperion(), &DustParams::saturn(), mean_prefactor, norm_prefactor)
        .map_err(to_py)?;
    to_object(py, &r)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    experiment::preset_names().collect()
}

/// TOML text of a built-in preset.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    experiment::preset(name).and_then(|c| c.to_toml_string()).map_err(to_py)
}

/// Runs the experiment described by `config` (TOML text) into `out_dir` and
/// returns its summary.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str, out_dir: PathBuf) -> PyResult<Py<PyAny>> {
    let cfg = RunConfig::from_toml_str(config).map_err(to_py)?;
    let outcome = py.detach(|| experiment::run_experiment(&cfg, &out_dir)).map_err(to_py)?;
    to_object(py, &outcome.summary)
}

/// Verifies a run or sweep directory and returns its report.
#[pyfunction]
fn load_report(py: Python<'_>, dir: PathBuf) -> PyResult<Py<PyAny>> {
    to_object(py, &experiment::load_report(&dir).map_err(to_py)?)
}

#[pymodule]
pub fn hyperion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HyperionError", m.py().get_type::<HyperionError>())?;
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyInitialState>()?;
    m.add_class::<PyOrbit>()?;
    m.add_class::<PyNoise>()?;
    m.add_class::<PyProbabilityVector>()?;
    m.add_class::<PyQuantumState>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(solve_kepler, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(rotating_frame_energy, m)?)?;
    m.add_function(wrap_pyfunction!(correlated_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_diffusion, m)?)?;
    m.add_function(wrap_pyfunction!(one_norm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay_time, m)?)?;
    m.add_function(wrap_pyfunction!(hyperion_report, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(load_report, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
