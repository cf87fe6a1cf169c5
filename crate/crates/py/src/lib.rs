//! Python bindings.
//!
//! Configs cross the boundary as JSON strings with the same schema as the
//! command-line config file; results come back as dicts or CSV text.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use leaky_decoy::optimizer::{optimize as optimize_core, OptimizationSpec};
use leaky_decoy::pipeline::{evaluate as evaluate_core, AnalysisConfig, Evaluation};
use leaky_decoy::sweep::{find_cutoff, run_sweep, write_csv, Scenario, SweepSpec};
use leaky_decoy::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::InvalidParams(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) | Error::Csv(_) => PyIOError::new_err(e.to_string()),
        Error::Numeric(_) | Error::EstimationAborted(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string())),
    }
}

fn fill_evaluation(d: &Bound<'_, PyDict>, e: &Evaluation) -> PyResult<()> {
    let k = &e.key;
    d.set_item("ell", k.ell)?;
    d.set_item("ell_raw", k.ell_raw)?;
    d.set_item("rate", k.rate)?;
    d.set_item("abort", k.abort)?;
    d.set_item("eps", k.eps)?;
    d.set_item("leak_ec", k.leak_ec)?;
    d.set_item("e_ph", k.phase.e_ph)?;
    d.set_item("route", k.phase.route.name())?;
    d.set_item("n0_z", k.yields.n0_z)?;
    d.set_item("n1_z", k.yields.n1_z)?;
    d.set_item("n1_x", k.yields.n1_x)?;
    d.set_item("e1_x", k.yields.e1_x)?;
    Ok(())
}

/// Key length and bounds at fixed settings.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn evaluate<'py>(py: Python<'py>, config: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg: AnalysisConfig = parse(config)?;
    let e = py.allow_threads(|| evaluate_core(&cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    fill_evaluation(&d, &e)?;
    Ok(d)
}

/// Worst-case key maximised over the source settings.
#[pyfunction]
#[pyo3(signature = (config=None, optimizer=None))]
fn optimize<'py>(
    py: Python<'py>,
    config: Option<&str>,
    optimizer: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: AnalysisConfig = parse(config)?;
    let spec: OptimizationSpec = parse(optimizer)?;
    let r = py.allow_threads(|| optimize_core(&spec, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    if let Some(e) = &r.evaluation {
        fill_evaluation(&d, e)?;
    }
    d.set_item("ell", r.ell)?;
    d.set_item("rate", r.rate)?;
    d.set_item("theta_v", r.theta_v)?;
    d.set_item("theta_w", r.theta_w)?;
    let p = &r.protocol;
    for (name, v) in [
        ("gamma_s", p.gamma_s),
        ("gamma_v", p.gamma_v),
        ("gamma_w", p.gamma_w),
        ("p_s", p.p_s),
        ("p_v", p.p_v),
        ("p_w", p.p_w),
        ("p_z", p.p_z),
        ("p_zac", p.p_zac),
    ] {
        d.set_item(name, v)?;
    }
    d.set_item("evaluations", r.trace.len())?;
    Ok(d)
}

/// Optimised sweep; returns the CSV text the command-line runner writes.
#[pyfunction]
#[pyo3(signature = (scenario, distances, i_max=vec![0.0], n_pulses=vec![1e12], pm=false, jobs=1, seed=1, config=None, optimizer=None))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    scenario: &str,
    distances: Vec<f64>,
    i_max: Vec<f64>,
    n_pulses: Vec<f64>,
    pm: bool,
    jobs: usize,
    seed: u64,
    config: Option<&str>,
    optimizer: Option<&str>,
) -> PyResult<String> {
    let mut spec = SweepSpec::new(Scenario::parse(scenario).map_err(to_py)?, distances);
    spec.i_max = i_max;
    spec.n_pulses = n_pulses;
    spec.pm = pm;
    spec.jobs = jobs;
    spec.base = parse(config)?;
    spec.optimizer = parse(optimizer)?;
    spec.optimizer.seed = seed;
    let out = py.allow_threads(|| run_sweep(&spec)).map_err(to_py)?;
    let mut buf = Vec::new();
    write_csv(&out.rows, &mut buf).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Bracket `(last_positive, first_zero)` on the distance where the key vanishes.
#[pyfunction]
#[pyo3(signature = (lo, hi, resolution=1.0, config=None, optimizer=None))]
fn cutoff(
    py: Python<'_>,
    lo: f64,
    hi: f64,
    resolution: f64,
    config: Option<&str>,
    optimizer: Option<&str>,
) -> PyResult<(Option<f64>, Option<f64>)> {
    let cfg: AnalysisConfig = parse(config)?;
    let spec: OptimizationSpec = parse(optimizer)?;
    let c = py
        .allow_threads(|| find_cutoff(&spec, &cfg, lo, hi, resolution))
        .map_err(to_py)?;
    Ok((c.last_positive, c.first_zero))
}

#[pymodule]
fn leaky_decoy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(cutoff, m)?)?;
    Ok(())
}
