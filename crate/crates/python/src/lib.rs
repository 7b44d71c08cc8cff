//! Python bindings: model construction, single trajectories, ensembles
//! checked against the master equation, the classical RSJ integrator and
//! configuration-driven batch runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qtraj::batch::{self, RunOptions, RunOutcome};
use qtraj::classical;
use qtraj::config::RunConfig;
use qtraj::ensemble::{ensemble_density, EnsembleSpec};
use qtraj::hilbert;
use qtraj::lindblad::{integrate_master, MasterEquationRun};
use qtraj::models::{self, DuffingParams, HarmonicParams, SquidPhysicalParams};
use qtraj::observables;
use qtraj::stochastic::{self, StepperConfig, TimeSpan, Unravelling};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_unravelling(name: &str) -> PyResult<Unravelling> {
    match name {
        "qsd" => Ok(Unravelling::Qsd),
        "jumps" => Ok(Unravelling::Jumps),
        other => Err(PyValueError::new_err(format!("unknown unravelling `{other}`; expected `qsd` or `jumps`"))),
    }
}

#[pyclass(name = "FockSpace", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyFockSpace(hilbert::FockSpace);

#[pymethods]
impl PyFockSpace {
    #[new]
    #[pyo3(signature = (n_levels, n_modes = 2))]
    fn new(n_levels: usize, n_modes: usize) -> PyResult<Self> {
        hilbert::FockSpace::new(n_levels, n_modes).map(Self).map_err(value_err)
    }

    #[getter]
    fn n_levels(&self) -> usize {
        self.0.n_levels()
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.0.n_modes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn index(&self, levels: Vec<usize>) -> PyResult<usize> {
        self.0.index(&levels).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("FockSpace(n_levels={}, n_modes={})", self.0.n_levels(), self.0.n_modes())
    }
}

#[pyclass(name = "StateVector", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyStateVector(hilbert::StateVector);

#[pymethods]
impl PyStateVector {
    /// Normalised state from amplitudes.
    #[new]
    fn new(amplitudes: Vec<Complex64>) -> PyResult<Self> {
        hilbert::StateVector::new(amplitudes).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn fock(space: &PyFockSpace, levels: Vec<usize>) -> PyResult<Self> {
        hilbert::StateVector::fock(&space.0, &levels).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn coherent(space: &PyFockSpace, alphas: Vec<Complex64>) -> PyResult<Self> {
        hilbert::StateVector::coherent(&space.0, &alphas).map(Self).map_err(value_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.amplitudes().to_vec()
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Population of the top tenth of the levels, maximised over modes.
    fn leakage(&self, space: &PyFockSpace) -> f64 {
        self.0.leakage(&space.0)
    }

    /// Entanglement entropy of a two-mode state, in nats.
    fn entanglement_entropy(&self, space: &PyFockSpace) -> PyResult<f64> {
        observables::entanglement_entropy(&self.0, &space.0).map_err(value_err)
    }

    /// Reduced density matrix of mode `keep` as nested lists.
    fn reduced_density_matrix(&self, space: &PyFockSpace, keep: usize) -> PyResult<Vec<Vec<Complex64>>> {
        let rho = hilbert::partial_trace(&self.0, &space.0, keep).map_err(value_err)?;
        Ok(rows(rho.matrix()))
    }
}

fn rows(m: &DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[pyclass(name = "Model", frozen)]
struct PyModel(models::SystemModel);

#[pymethods]
impl PyModel {
    /// Coupled Duffing pair with `n_levels` per mode.
    #[staticmethod]
    #[pyo3(signature = (n_levels, beta = 1.0, g = 0.3, gamma = 0.125, mu = 0.2))]
    fn duffing_pair(n_levels: usize, beta: f64, g: f64, gamma: f64, mu: f64) -> PyResult<Self> {
        let space = hilbert::FockSpace::pair(n_levels).map_err(value_err)?;
        models::duffing_pair(&DuffingParams { beta, g, gamma, mu }, &space)
            .map(Self)
            .map_err(value_err)
    }

    /// Coupled SQUID rings at the base circuit values scaled by `(a, b)`.
    #[staticmethod]
    #[pyo3(signature = (n_levels, scale_a = 1.0, scale_b = 1.0, mu = 0.2))]
    fn squid_pair(n_levels: usize, scale_a: f64, scale_b: f64, mu: f64) -> PyResult<Self> {
        let space = hilbert::FockSpace::pair(n_levels).map_err(value_err)?;
        let phys = models::apply_scaling(&SquidPhysicalParams::base(), scale_a, scale_b).map_err(value_err)?;
        models::squid_pair(&phys, mu, &space).map(Self).map_err(value_err)
    }

    /// One SQUID ring at the base circuit values scaled by `(a, b)`.
    #[staticmethod]
    #[pyo3(signature = (n_levels, scale_a = 1.0, scale_b = 1.0))]
    fn squid_single(n_levels: usize, scale_a: f64, scale_b: f64) -> PyResult<Self> {
        let space = hilbert::FockSpace::single(n_levels).map_err(value_err)?;
        let phys = models::apply_scaling(&SquidPhysicalParams::base(), scale_a, scale_b).map_err(value_err)?;
        models::squid_single(&phys, &space).map(Self).map_err(value_err)
    }

    /// Damped, driven harmonic mode.
    #[staticmethod]
    #[pyo3(signature = (n_levels, zeta, static_force = 0.0, drive_amplitude = 0.0, drive_omega = 1.0, damping_correction = true))]
    fn harmonic(
        n_levels: usize,
        zeta: f64,
        static_force: f64,
        drive_amplitude: f64,
        drive_omega: f64,
        damping_correction: bool,
    ) -> PyResult<Self> {
        let space = hilbert::FockSpace::single(n_levels).map_err(value_err)?;
        let params = HarmonicParams {
            zeta,
            static_force,
            drive_amplitude,
            drive_omega,
            damping_correction,
        };
        models::harmonic_mode(&params, &space).map(Self).map_err(value_err)
    }

    #[getter]
    fn space(&self) -> PyFockSpace {
        PyFockSpace(*self.0.space())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.space().dim()
    }

    #[getter]
    fn drive_period(&self) -> f64 {
        self.0.drive_period()
    }

    /// Product coherent state centred on `(x, p)` per mode, oscillator units.
    fn coherent_state(&self, points: Vec<(f64, f64)>) -> PyResult<PyStateVector> {
        self.0.coherent_state(&points).map(PyStateVector).map_err(value_err)
    }

    /// Product coherent state centred on classical coordinates per mode.
    fn coherent_state_classical(&self, points: Vec<(f64, f64)>) -> PyResult<PyStateVector> {
        self.0.coherent_state_classical(&points).map(PyStateVector).map_err(value_err)
    }
}

/// Derived dimensionless groups of the base ring scaled by `(a, b)`.
#[pyfunction]
#[pyo3(signature = (scale_a = 1.0, scale_b = 1.0))]
fn squid_parameters(scale_a: f64, scale_b: f64) -> PyResult<BTreeMap<&'static str, f64>> {
    let phys = models::apply_scaling(&SquidPhysicalParams::base(), scale_a, scale_b).map_err(value_err)?;
    let d = models::squid_dimensionless(&phys).map_err(value_err)?;
    Ok(BTreeMap::from([
        ("beta", d.beta),
        ("zeta", d.zeta),
        ("omega", d.omega),
        ("phi_d", d.phi_d),
        ("phi_x", d.phi_x),
        ("big_omega", d.big_omega),
        ("omega0", d.omega0),
        ("josephson_energy", d.josephson_energy),
        ("capacitance", phys.capacitance),
        ("inductance", phys.inductance),
        ("critical_current", phys.critical_current),
    ]))
}

/// One trajectory; returns times, per-mode `<x>`/`<p>`, entropy, leakage,
/// jump times and the abort reason (if any).
#[pyfunction]
#[pyo3(signature = (model, psi0, unravelling, dt, steps, record_every = 1, seed = 0, index = 0))]
#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    py: Python<'_>,
    model: &PyModel,
    psi0: &PyStateVector,
    unravelling: &str,
    dt: f64,
    steps: usize,
    record_every: usize,
    seed: u64,
    index: u64,
) -> PyResult<Py<PyAny>> {
    let config = StepperConfig::new(parse_unravelling(unravelling)?, dt);
    let span = TimeSpan {
        start: 0.0,
        steps,
        record_every,
    };
    let record = py
        .detach(|| stochastic::run_trajectory(&model.0, &psi0.0, &config, seed, index, &span))
        .map_err(value_err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("times", record.times)?;
    out.set_item("positions", record.positions)?;
    out.set_item("momenta", record.momenta)?;
    out.set_item("entropy", record.entropy)?;
    out.set_item("leakage", record.leakage)?;
    out.set_item("jump_times", record.jumps.iter().map(|j| j.0).collect::<Vec<_>>())?;
    out.set_item("expected_jumps", record.expected_jumps)?;
    out.set_item("abort", record.abort)?;
    out.set_item("final_state", record.final_state.map(PyStateVector))?;
    Ok(out.into_any().unbind())
}

/// Trace distance between the ensemble-mean final state of `n_trajectories`
/// trajectories and the master-equation solution at the same time.
#[pyfunction]
#[pyo3(signature = (model, psi0, unravelling, dt, steps, n_trajectories, seed = 0, workers = 1))]
#[allow(clippy::too_many_arguments)]
fn oracle_trace_distance(
    py: Python<'_>,
    model: &PyModel,
    psi0: &PyStateVector,
    unravelling: &str,
    dt: f64,
    steps: usize,
    n_trajectories: u64,
    seed: u64,
    workers: usize,
) -> PyResult<f64> {
    let unravelling = parse_unravelling(unravelling)?;
    py.detach(|| {
        let spec = EnsembleSpec {
            model: &model.0,
            psi0: &psi0.0,
            config: StepperConfig::new(unravelling, dt),
            seed,
            span: TimeSpan {
                start: 0.0,
                steps,
                record_every: steps.max(1),
            },
        };
        let mean = ensemble_density(&spec, 0..n_trajectories, workers).map_err(runtime_err)?;
        let run = MasterEquationRun {
            model: &model.0,
            rho0: hilbert::DensityMatrix::pure(&psi0.0),
            t_start: 0.0,
            dt,
            steps,
            record_every: steps.max(1),
        };
        let exact = integrate_master(&run).map_err(runtime_err)?;
        mean.trace_distance(exact.last()).map_err(runtime_err)
    })
}

/// Classical RSJ trajectory `(times, phi, dphi)` for the base ring.
#[pyfunction]
#[pyo3(signature = (phi0, dphi0, periods, steps_per_period = 400, record_every = 1))]
fn integrate_rsj(
    phi0: f64,
    dphi0: f64,
    periods: usize,
    steps_per_period: usize,
    record_every: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = models::squid_dimensionless(&SquidPhysicalParams::base()).map_err(value_err)?;
    let dt = 2.0 * std::f64::consts::PI / d.omega / steps_per_period as f64;
    let tr = classical::integrate_rsj([phi0, dphi0], &d, 0.0, dt, periods * steps_per_period, record_every)
        .map_err(value_err)?;
    let phi = tr.states.iter().map(|s| s[0]).collect();
    let dphi = tr.states.iter().map(|s| s[1]).collect();
    Ok((tr.times, phi, dphi))
}

/// Run a TOML configuration file; returns one dict per sweep point.
#[pyfunction]
#[pyo3(signature = (path, seed = None, workers = 1, output_dir = None, resume = false))]
fn run_config(
    py: Python<'_>,
    path: PathBuf,
    seed: Option<u64>,
    workers: usize,
    output_dir: Option<PathBuf>,
    resume: bool,
) -> PyResult<Vec<Py<PyAny>>> {
    let config = RunConfig::load(&path).map_err(value_err)?;
    let options = RunOptions {
        seed,
        workers,
        resume,
        output_dir,
        max_new_trajectories: None,
    };
    let outcome = py.detach(|| batch::run(&config, &options)).map_err(runtime_err)?;
    let RunOutcome::Complete { points, .. } = outcome else {
        return Err(runtime_err("run stopped early"));
    };
    points
        .into_iter()
        .map(|p| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("index", p.index)?;
            d.set_item("coordinates", p.coordinates)?;
            d.set_item("observable", p.observable)?;
            d.set_item("mean", p.result.mean)?;
            d.set_item("stderr", p.result.stderr)?;
            d.set_item("settled", p.result.settled)?;
            d.set_item("max_leakage", p.max_leakage)?;
            d.set_item("valid", p.valid)?;
            d.set_item("invalid", p.invalid)?;
            Ok(d.into_any().unbind())
        })
        .collect()
}

#[pymodule]
fn qtraj_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFockSpace>()?;
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(squid_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(run_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_trace_distance, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_rsj, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
