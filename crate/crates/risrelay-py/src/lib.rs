//! Python bindings: scenario generation, the three solvers, discrete phase
//! search, and the experiment runner.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use risrelay::channel::{generate_scenario, FadingParams, SystemGeometry};
use risrelay::discrete::{brute_force_oracle, successive_refinement, DuplexMode};
use risrelay::full_duplex::solve_full_duplex;
use risrelay::half_duplex::solve_half_duplex;
use risrelay::phases::quantize_phases;
use risrelay::precoding::RelaySolver;
use risrelay::sim::{run_experiment, solve_ris_only, ExperimentConfig};
use risrelay::SolverOptions;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_solver(name: &str) -> PyResult<RelaySolver> {
    match name {
        "duality" => Ok(RelaySolver::Duality),
        "zf" => Ok(RelaySolver::Zf),
        _ => Err(PyValueError::new_err("solver must be 'duality' or 'zf'")),
    }
}

fn parse_mode(name: &str) -> PyResult<DuplexMode> {
    match name {
        "hd" => Ok(DuplexMode::Hd),
        "fd" => Ok(DuplexMode::Fd),
        _ => Err(PyValueError::new_err("mode must be 'hd' or 'fd'")),
    }
}

fn options(solver: &str) -> PyResult<SolverOptions> {
    Ok(SolverOptions {
        relay_solver: parse_solver(solver)?,
        ..SolverOptions::default()
    })
}

/// One channel realization; construct with `generate_channels`.
#[pyclass(name = "Channels")]
struct PyChannels {
    inner: risrelay::channel::ChannelSet,
}

#[pymethods]
impl PyChannels {
    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn num_ris_elements(&self) -> usize {
        self.inner.num_ris_elements()
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.inner.noise_power
    }

    /// Copy with all RIS-adjacent links zeroed (relay-only baseline input).
    fn with_dead_ris(&self) -> PyChannels {
        PyChannels { inner: self.inner.with_dead_ris() }
    }
}

/// Solver output shared by all protocols; `theta2` is None outside
/// half-duplex mode.
#[pyclass(name = "Solution")]
struct PySolution {
    #[pyo3(get)]
    total_power_mw: f64,
    #[pyo3(get)]
    total_power_dbm: f64,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    outer_iterations: usize,
    #[pyo3(get)]
    relay_rate: Option<f64>,
    #[pyo3(get)]
    user_rates: Vec<f64>,
    #[pyo3(get)]
    power_history: Vec<f64>,
    #[pyo3(get)]
    theta1: Vec<f64>,
    #[pyo3(get)]
    theta2: Option<Vec<f64>>,
}

#[pyfunction]
#[pyo3(signature = (m=5, n=5, k=4, l=50, seed=0, placement="users-center"))]
fn generate_channels(
    m: usize,
    n: usize,
    k: usize,
    l: usize,
    seed: u64,
    placement: &str,
) -> PyResult<PyChannels> {
    let geometry = match placement {
        "users-center" => SystemGeometry::users_center(m, n, k, l),
        "midpoint" => SystemGeometry::midpoint(m, n, k, l),
        _ => return Err(PyValueError::new_err("placement must be 'users-center' or 'midpoint'")),
    };
    let inner = generate_scenario(&geometry, &FadingParams::default(), seed).map_err(err)?;
    Ok(PyChannels { inner })
}

#[pyfunction]
#[pyo3(signature = (channels, rth, solver="duality"))]
fn half_duplex(channels: &PyChannels, rth: f64, solver: &str) -> PyResult<PySolution> {
    let sol = solve_half_duplex(&channels.inner, rth, &options(solver)?).map_err(err)?;
    Ok(PySolution {
        total_power_mw: sol.total_power,
        total_power_dbm: 10.0 * sol.total_power.log10(),
        converged: sol.converged,
        outer_iterations: sol.outer_iterations,
        relay_rate: Some(sol.relay_rate),
        user_rates: sol.user_rates,
        power_history: sol.power_history,
        theta1: sol.theta1.extract_phases(),
        theta2: Some(sol.theta2.extract_phases()),
    })
}

#[pyfunction]
#[pyo3(signature = (channels, rth, solver="duality"))]
fn full_duplex(channels: &PyChannels, rth: f64, solver: &str) -> PyResult<PySolution> {
    let sol = solve_full_duplex(&channels.inner, rth, &options(solver)?).map_err(err)?;
    Ok(PySolution {
        total_power_mw: sol.total_power,
        total_power_dbm: 10.0 * sol.total_power.log10(),
        converged: sol.converged,
        outer_iterations: sol.outer_iterations,
        relay_rate: Some(sol.relay_rate),
        user_rates: sol.user_rates,
        power_history: sol.power_history,
        theta1: sol.theta.extract_phases(),
        theta2: None,
    })
}

#[pyfunction]
fn ris_only(channels: &PyChannels, rth: f64) -> PyResult<PySolution> {
    let sol = solve_ris_only(&channels.inner, rth, &SolverOptions::default()).map_err(err)?;
    Ok(PySolution {
        total_power_mw: sol.total_power,
        total_power_dbm: 10.0 * sol.total_power.log10(),
        converged: sol.converged,
        outer_iterations: sol.outer_iterations,
        relay_rate: None,
        user_rates: sol.user_rates,
        power_history: sol.power_history,
        theta1: sol.theta.extract_phases(),
        theta2: None,
    })
}

/// Nearest-level quantization of continuous phases to b bits per element.
#[pyfunction]
fn quantize(theta: Vec<f64>, b: u32) -> PyResult<Vec<f64>> {
    quantize_phases(&theta, b).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (channels, mode, rth, b, init1, init2=None, solver="duality"))]
fn refine_discrete(
    channels: &PyChannels,
    mode: &str,
    rth: f64,
    b: u32,
    init1: Vec<f64>,
    init2: Option<Vec<f64>>,
    solver: &str,
) -> PyResult<PySolution> {
    let sol = successive_refinement(
        &channels.inner,
        parse_mode(mode)?,
        rth,
        b,
        &init1,
        init2.as_deref(),
        &options(solver)?,
    )
    .map_err(err)?;
    Ok(PySolution {
        total_power_mw: sol.total_power,
        total_power_dbm: 10.0 * sol.total_power.log10(),
        converged: true,
        outer_iterations: sol.stage_solves,
        relay_rate: None,
        user_rates: Vec::new(),
        power_history: Vec::new(),
        theta1: sol.theta1.extract_phases(),
        theta2: sol.theta2.map(|t| t.extract_phases()),
    })
}

#[pyfunction]
#[pyo3(signature = (channels, mode, rth, b, solver="duality"))]
fn oracle_discrete(
    channels: &PyChannels,
    mode: &str,
    rth: f64,
    b: u32,
    solver: &str,
) -> PyResult<PySolution> {
    let sol = brute_force_oracle(&channels.inner, parse_mode(mode)?, rth, b, &options(solver)?)
        .map_err(err)?;
    Ok(PySolution {
        total_power_mw: sol.total_power,
        total_power_dbm: 10.0 * sol.total_power.log10(),
        converged: true,
        outer_iterations: sol.stage_solves,
        relay_rate: None,
        user_rates: Vec::new(),
        power_history: Vec::new(),
        theta1: sol.theta1.extract_phases(),
        theta2: sol.theta2.map(|t| t.extract_phases()),
    })
}

/// Runs a full experiment from a JSON config string and returns the CSV
/// table and summary as strings.
#[pyfunction]
fn simulate(config_json: &str) -> PyResult<(String, String)> {
    let config: ExperimentConfig = serde_json::from_str(config_json).map_err(err)?;
    let out = run_experiment(&config).map_err(err)?;
    Ok((out.csv(), out.summary_csv()))
}

#[pymodule]
fn risrelay_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannels>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(generate_channels, m)?)?;
    m.add_function(wrap_pyfunction!(half_duplex, m)?)?;
    m.add_function(wrap_pyfunction!(full_duplex, m)?)?;
    m.add_function(wrap_pyfunction!(ris_only, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(refine_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
