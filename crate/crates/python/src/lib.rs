//! Python module `etrust`. Problems are passed as dicts (or JSON strings) in
//! the same schema as the command-line tool; results come back as dicts.

use etrust::certify::{self, CertifyOptions, OptimalityCertificate};
use etrust::linalg::DEFAULT_EIG_TOL;
use etrust::oracle::{self, OracleOptions, ProbeOptions};
use etrust::problem::{check_dimension_condition, check_slater};
use etrust::relaxation::{self, RelaxationOptions};
use etrust::robust::{self, ScenarioOptions};
use etrust::{io, Error};
use nalgebra::DVector;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde_json::{json, Value};

create_exception!(etrust, SolverError, PyException);
create_exception!(etrust, InfeasibleError, PyException);

fn to_value<T: serde::Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

pub fn solve_text(text: &str, tol: Option<f64>, eig_tol: Option<f64>) -> Result<Value, Error> {
    let p = io::parse_problem(text)?;
    let mut opts = RelaxationOptions {
        eig_tol: eig_tol.unwrap_or(DEFAULT_EIG_TOL),
        ..RelaxationOptions::default()
    };
    if let Some(t) = tol {
        opts.sdp.tol = t;
    }
    let rel = relaxation::solve_relaxation_with(&p, &opts)?;
    let certificate = if rel.candidate_feasible {
        Some(certify::certify_relaxation(&p, &rel)?)
    } else {
        None
    };
    Ok(json!({ "relaxation": to_value(&rel), "certificate": to_value(certificate) }))
}

pub fn check_text(text: &str, eig_tol: Option<f64>) -> Result<Value, Error> {
    let (f, c) = io::parse_problem_parts(text)?;
    Ok(json!({
        "dimension_condition": to_value(check_dimension_condition(&f, &c, eig_tol.unwrap_or(DEFAULT_EIG_TOL))?),
        "slater": to_value(check_slater(&c)),
    }))
}

pub fn certify_text(text: &str, x: Vec<f64>, lambda: Vec<f64>, tol: Option<f64>) -> Result<Value, Error> {
    let p = io::parse_problem(text)?;
    let mut opts = CertifyOptions::default();
    if let Some(t) = tol {
        opts.kkt_tol = t;
        opts.complementarity_tol = t;
    }
    let v =
        certify::verify_global_optimality_with(&p, &DVector::from_vec(x), &OptimalityCertificate::new(lambda)?, &opts)?;
    Ok(to_value(v))
}

pub fn slemma_text(text: &str, epsilon: Option<f64>) -> Result<Value, Error> {
    let (f, c) = io::parse_problem_parts(text)?;
    Ok(match epsilon {
        Some(e) => to_value(certify::asymptotic_certificate(&f, &c, e)?),
        None => to_value(certify::slemma_certificate(&f, &c)?),
    })
}

pub fn rlsp_text(text: &str, samples: usize, seed: u64) -> Result<Value, Error> {
    let u = io::parse_rlsp(text)?;
    let sol = robust::solve_rlsp(&u)?;
    let x = DVector::from_vec(sol.x.clone());
    let scenarios = robust::scenario_max_residual(
        &x,
        &u,
        &ScenarioOptions {
            samples,
            seed,
            ..ScenarioOptions::default()
        },
    )?;
    Ok(json!({
        "solution": to_value(&sol),
        "worst_case_residual": robust::worst_case_residual(&x, &u)?,
        "scenarios": to_value(scenarios),
    }))
}

pub fn rsocp_text(text: &str) -> Result<Value, Error> {
    let p = io::parse_rsocp(text)?;
    let sol = robust::solve_rsocp(&p)?;
    let x = DVector::from_vec(sol.x.clone());
    let worst = p
        .constraints()
        .iter()
        .map(|c| robust::worst_case_residual(&x, &c.uncertainty))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({ "solution": to_value(&sol), "worst_case_residuals": worst }))
}

pub fn oracle_text(text: &str) -> Result<Value, Error> {
    let p = io::parse_problem(text)?;
    Ok(to_value(oracle::brute_force_min(&p, &OracleOptions::default())?))
}

pub fn probe_text(text: &str, midpoints: usize, seed: u64) -> Result<Value, Error> {
    let (f, c) = io::parse_problem_parts(text)?;
    let opts = ProbeOptions {
        num_midpoints: midpoints,
        seed,
        seed_pairs: vec![],
    };
    Ok(to_value(oracle::convexity_probe(&f, &c, &opts)?))
}

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Precondition { .. } => PyValueError::new_err(e.to_string()),
        Error::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        _ => SolverError::new_err(e.to_string()),
    }
}

/// Accepts a dict or a JSON string.
fn as_text(py: Python<'_>, data: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = data.extract::<String>() {
        return Ok(s);
    }
    py.import("json")?.call_method1("dumps", (data,))?.extract()
}

fn to_py<'py>(py: Python<'py>, v: Result<Value, Error>) -> PyResult<Bound<'py, PyAny>> {
    let v = v.map_err(py_err)?;
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// Solves the semidefinite relaxation and certifies the extracted point.
#[pyfunction]
#[pyo3(signature = (problem, tol=None, eig_tol=None))]
fn solve<'py>(
    py: Python<'py>,
    problem: &Bound<'py, PyAny>,
    tol: Option<f64>,
    eig_tol: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, problem)?;
    to_py(py, py.detach(|| solve_text(&text, tol, eig_tol)))
}

#[pyfunction]
#[pyo3(signature = (problem, eig_tol=None))]
fn check<'py>(py: Python<'py>, problem: &Bound<'py, PyAny>, eig_tol: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, problem)?;
    to_py(py, check_text(&text, eig_tol))
}

#[pyfunction]
#[pyo3(name = "certify", signature = (problem, x, lam, tol=None))]
fn certify_point<'py>(
    py: Python<'py>,
    problem: &Bound<'py, PyAny>,
    x: Vec<f64>,
    lam: Vec<f64>,
    tol: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, problem)?;
    to_py(py, certify_text(&text, x, lam, tol))
}

#[pyfunction]
#[pyo3(signature = (problem, epsilon=None))]
fn slemma<'py>(py: Python<'py>, problem: &Bound<'py, PyAny>, epsilon: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, problem)?;
    to_py(py, py.detach(|| slemma_text(&text, epsilon)))
}

#[pyfunction]
#[pyo3(signature = (data, samples=10_000, seed=0))]
fn rlsp<'py>(py: Python<'py>, data: &Bound<'py, PyAny>, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, data)?;
    to_py(py, py.detach(|| rlsp_text(&text, samples, seed)))
}

#[pyfunction]
fn rsocp<'py>(py: Python<'py>, data: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, data)?;
    to_py(py, py.detach(|| rsocp_text(&text)))
}

/// Brute-force global minimum; intended for dimension at most 4.
#[pyfunction]
fn brute_force<'py>(py: Python<'py>, problem: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, problem)?;
    to_py(py, py.detach(|| oracle_text(&text)))
}

#[pyfunction]
#[pyo3(signature = (problem, midpoints=1000, seed=0))]
fn probe<'py>(
    py: Python<'py>,
    problem: &Bound<'py, PyAny>,
    midpoints: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let text = as_text(py, problem)?;
    to_py(py, py.detach(|| probe_text(&text, midpoints, seed)))
}

#[pymodule]
#[pyo3(name = "etrust")]
fn etrust_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(certify_point, m)?)?;
    m.add_function(wrap_pyfunction!(slemma, m)?)?;
    m.add_function(wrap_pyfunction!(rlsp, m)?)?;
    m.add_function(wrap_pyfunction!(rsocp, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CURVED_CONSTRAINT: &str = r#"{"A": [[-1,0,0],[0,-1,0],[0,0,-1]], "a": [-2,0,0], "x0": [-0.5,0,0],
        "alpha": 1.25, "constraints": [{"b": [1,0,0], "beta": 0}], "B": [[1,0,0]]}"#;

    #[test]
    fn solve_and_certify_round_trip() {
        let v = solve_text(CURVED_CONSTRAINT, None, None).unwrap();
        assert!((v["relaxation"]["sdp_value"].as_f64().unwrap() + 1.0).abs() < 1e-6);
        let c = certify_text(CURVED_CONSTRAINT, vec![0.0, 1.0, 0.0], vec![1.0, 1.0], None).unwrap();
        assert_eq!(c["valid"], true);
    }

    #[test]
    fn errors_keep_their_kind() {
        assert!(matches!(solve_text("{}", None, None), Err(Error::InvalidInput(_))));
        let empty =
            r#"{"A": [[1.0]], "a": [0.0], "x0": [0.0], "alpha": 1.0, "constraints": [{"b": [1.0], "beta": -2.0}]}"#;
        assert!(matches!(solve_text(empty, None, None), Err(Error::Infeasible(_))));
    }
}
