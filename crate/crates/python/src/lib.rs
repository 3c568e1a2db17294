//! Python bindings: models, the geometric kernel and the scenario runner.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lfslab::cli::{execute, ScenarioConfig};
use lfslab::connection::connection_at;
use lfslab::curvature::{epsilon_admissible, weighted_ricci, NEff};
use lfslab::geodesic::{exponential_map, local_distance};
use lfslab::legendre::legendre_transform;
use lfslab::model::{build_model, build_weight, model_summaries, SpacetimeModel};
use lfslab::Error;

fn err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A built-in Lorentz–Finsler model.
#[pyclass(name = "Model", module = "pylfslab")]
struct PyModel {
    inner: SpacetimeModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (name, dim = 4, params = None))]
    fn new(name: &str, dim: usize, params: Option<BTreeMap<String, String>>) -> PyResult<Self> {
        let inner = build_model(name, dim, &params.unwrap_or_default()).map_err(err)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Copy with the weight replaced.
    fn with_weight(&self, name: &str, a: f64) -> PyResult<Self> {
        let w = build_weight(name, a).map_err(err)?;
        Ok(PyModel {
            inner: self.inner.clone().with_weight(w),
        })
    }

    fn lagrangian(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.inner.eval_l(&x, &v).map_err(err)
    }

    fn finsler(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.inner.finsler_f(&x, &v).map_err(err)
    }

    /// `g_v` as a list of rows.
    fn fundamental_tensor(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let g = self.inner.fundamental_tensor(&x, &v).map_err(err)?;
        Ok(g.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn classify(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<String> {
        let c = self.inner.classify(&x, &v).map_err(err)?;
        Ok(format!("{:?} {:?}", c.kind, c.orientation).to_lowercase())
    }

    /// Chern connection `Γ[a][b][c] = Γ^a_{bc}` at `(x, v)`.
    fn christoffel(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let c = connection_at(&self.inner, &x, &v).map_err(err)?;
        let d = self.inner.dim;
        Ok((0..d)
            .map(|a| {
                (0..d)
                    .map(|b| (0..d).map(|e| c.chern(a, b, e)).collect())
                    .collect()
            })
            .collect())
    }

    fn exp(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        exponential_map(&self.inner, &x, &v).map_err(err)
    }

    fn distance(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        local_distance(&self.inner, &x, &y).map_err(err)
    }

    fn legendre(&self, x: Vec<f64>, omega: Vec<f64>) -> PyResult<Vec<f64>> {
        legendre_transform(&self.inner, &x, &omega).map_err(err)
    }

    /// `Ric_N(v)`; `n_eff` is a number or `"inf"`.
    fn weighted_ricci(&self, x: Vec<f64>, v: Vec<f64>, n_eff: &str) -> PyResult<f64> {
        let n = NEff::parse(n_eff, self.inner.n()).map_err(err)?;
        weighted_ricci(&self.inner, &x, &v, n).map_err(err)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, dim={})", self.inner.name, self.inner.dim)
    }
}

/// Names and one-line summaries of the built-in models.
#[pyfunction]
fn list_models() -> Vec<(String, String)> {
    model_summaries()
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// `(admissible, c)` for the pair `(N, ε)` in spatial dimension `n`.
#[pyfunction]
fn epsilon_range(n_eff: f64, epsilon: f64, n: usize) -> PyResult<(bool, f64)> {
    let r = epsilon_admissible(n_eff, epsilon, n).map_err(err)?;
    Ok((r.admissible, r.c))
}

/// Runs an experiment from a flat dotted-key config; returns
/// `(passed, report_text, report_json)` without writing files.
#[pyfunction]
fn run_experiment(config: BTreeMap<String, String>) -> PyResult<(bool, String, String)> {
    let cfg = ScenarioConfig::from_map(config).map_err(err)?;
    let out = execute(&cfg).map_err(err)?;
    Ok((
        out.report.passed(),
        out.report.to_text(),
        out.report.to_json(),
    ))
}

#[pymodule]
fn pylfslab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(list_models, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_range, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
