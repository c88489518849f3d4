//! Python bindings: configuration-driven runs plus the offset metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use ton_calib::cli::{cmd_grad_check, cmd_plotdata, cmd_run, cmd_simulate, ExperimentConfig};
use ton_calib::metrics::{cit as cit_index, CitConfig, OffsetSample, OffsetSeries};
use ton_calib::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::MissingInputFile(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::InvalidConfig(_)
        | Error::InvalidProfileParameter(_)
        | Error::Json(_)
        | Error::IndexMismatch(_)) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config(config_json: &str, seed: Option<u64>) -> PyResult<ExperimentConfig> {
    let mut c = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

/// Validates a JSON experiment configuration and returns it with defaults
/// filled in.
#[pyfunction]
fn normalize_config(config_json: &str) -> PyResult<String> {
    let c = config(config_json, None)?;
    serde_json::to_string_pretty(&c).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Writes the simulated dataset and returns its directory.
#[pyfunction]
#[pyo3(signature = (config_json, out, seed=None))]
fn simulate(config_json: &str, out: PathBuf, seed: Option<u64>) -> PyResult<String> {
    let dir = cmd_simulate(&config(config_json, seed)?, Some(&out)).map_err(to_py)?;
    Ok(dir.display().to_string())
}

/// Runs the configured variant into `out` and returns the metrics as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, out, seed=None))]
fn run(py: Python<'_>, config_json: &str, out: PathBuf, seed: Option<u64>) -> PyResult<String> {
    let c = config(config_json, seed)?;
    let report = py.detach(|| cmd_run(&c, Some(&out))).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Writes the plot-ready CSVs for a run directory and returns their paths.
#[pyfunction]
#[pyo3(signature = (run_dir, out=None))]
fn plotdata(run_dir: PathBuf, out: Option<PathBuf>) -> PyResult<Vec<String>> {
    let paths = cmd_plotdata(&run_dir, out.as_deref()).map_err(to_py)?;
    Ok(paths.iter().map(|p| p.display().to_string()).collect())
}

/// Gradient and Jacobian checks as `(name, max_error)` pairs.
#[pyfunction]
#[pyo3(signature = (seed=1))]
fn grad_check(seed: u64) -> Vec<(String, f64)> {
    cmd_grad_check(seed)
        .into_iter()
        .map(|r| (r.name.to_string(), r.max_error))
        .collect()
}

/// First position whose estimate is within `eps1` of the target (or of its
/// own truth when `target` is None) and within `eps2` of its predecessor.
#[pyfunction]
#[pyo3(signature = (estimates, truths, eps1, eps2, target=None))]
fn cit(
    estimates: Vec<f64>,
    truths: Vec<f64>,
    eps1: f64,
    eps2: f64,
    target: Option<f64>,
) -> PyResult<Option<usize>> {
    if estimates.len() != truths.len() {
        return Err(PyValueError::new_err(
            "estimates and truths differ in length",
        ));
    }
    let samples = estimates
        .iter()
        .zip(&truths)
        .enumerate()
        .map(|(index, (&estimate, &truth))| OffsetSample {
            index,
            estimate,
            truth,
        })
        .collect();
    let series = OffsetSeries::new(samples).map_err(to_py)?;
    let cfg = CitConfig { target, eps1, eps2 };
    cfg.validate().map_err(to_py)?;
    Ok(cit_index(&series, &cfg))
}

#[pymodule]
fn toncalib(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(normalize_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(plotdata, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(cit, m)?)?;
    Ok(())
}
