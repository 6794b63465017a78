//! Python bindings. Structured results cross the boundary as the same JSON
//! the command line writes, loaded into plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use kangle::ambient::AmbientSpec;
use kangle::dsl::{parse_immersion, print_immersion, ImmersionSpec};
use kangle::geometry::{GeometryError, Snapshot};
use kangle::harness::catalog::{builtin_catalog, find_entry};
use kangle::harness::report::to_json;
use kangle::harness::{resolve_suites, RunOptions, SnapshotView, Target};
use kangle::identities::{self, Tolerances};

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    PyModule::import(py, "json")?.call_method1("loads", (to_json(value),))
}

fn geometry_err(e: GeometryError) -> PyErr {
    match e {
        GeometryError::Usage(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A parsed immersion.
#[pyclass(name = "Immersion", module = "kangle", frozen)]
struct PyImmersion {
    spec: ImmersionSpec,
    domain: Vec<(f64, f64)>,
}

impl PyImmersion {
    fn target(&self) -> Target {
        Target {
            name: self.spec.name.clone(),
            spec: self.spec.clone(),
            domain: self.domain.clone(),
            expected: None,
        }
    }

    fn snapshot(&self, point: &[f64], order: usize) -> PyResult<Snapshot> {
        if point.len() != self.spec.domain_dim() {
            return Err(PyValueError::new_err(format!(
                "point has {} coordinates, the domain has {}",
                point.len(),
                self.spec.domain_dim()
            )));
        }
        Snapshot::compute(&self.spec, point, order).map_err(geometry_err)
    }
}

#[pymethods]
impl PyImmersion {
    #[getter]
    fn name(&self) -> &str {
        &self.spec.name
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n
    }

    #[getter]
    fn periodic(&self) -> bool {
        self.spec.periodic
    }

    #[getter]
    fn ambient(&self) -> String {
        self.spec.ambient.to_string()
    }

    /// Sampling box used by `verify`.
    #[getter]
    fn domain(&self) -> Vec<(f64, f64)> {
        self.domain.clone()
    }

    /// Copy of this immersion in a different ambient: `"flat"` or a
    /// curvature value for the space form.
    fn with_ambient(&self, ambient: &Bound<'_, PyAny>) -> PyResult<PyImmersion> {
        let m = 2 * self.spec.n;
        let amb = if let Ok(s) = ambient.extract::<String>() {
            if s != "flat" {
                return Err(PyValueError::new_err(format!(
                    "ambient must be \"flat\" or a number, got {s:?}"
                )));
            }
            AmbientSpec::flat(m)
        } else {
            AmbientSpec::space_form(m, ambient.extract::<f64>()?)
        };
        let mut spec = self.spec.clone();
        spec.ambient = amb;
        Ok(PyImmersion {
            spec,
            domain: self.domain.clone(),
        })
    }

    /// Plain evaluation of the map.
    fn map(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        if point.len() != self.spec.domain_dim() {
            return Err(PyValueError::new_err("wrong number of coordinates"));
        }
        Ok(self.spec.eval_point(&point))
    }

    /// Angles, classification and curvature data at one point.
    #[pyo3(signature = (point, order = 3))]
    fn eval<'py>(
        &self,
        py: Python<'py>,
        point: Vec<f64>,
        order: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let s = self.snapshot(&point, order)?;
        to_py(py, &SnapshotView::new(&s, &self.spec.name))
    }

    /// Identity residuals at one point under the calibrated conventions.
    #[pyo3(signature = (point, suites = vec!["all".to_string()], order = 3, tol_abs = 1e-7, tol_rel = 1e-5))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        point: Vec<f64>,
        suites: Vec<String>,
        order: usize,
        tol_abs: f64,
        tol_rel: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let names = resolve_suites(&suites).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let cal = identities::calibrate().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let s = self.snapshot(&point, order)?;
        let tol = Tolerances {
            abs: tol_abs,
            rel: tol_rel,
        };
        to_py(py, &identities::evaluate(&s, &names, cal.conventions, tol))
    }

    /// Sampled identity run over the sampling box.
    #[pyo3(signature = (suites = vec!["all".to_string()], points = 64, seed = 0, order = 3))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        suites: Vec<String>,
        points: usize,
        seed: u64,
        order: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        run(py, vec![self.target()], suites, points, seed, order)
    }

    /// Source text in the immersion language.
    fn __str__(&self) -> String {
        print_immersion(&self.spec)
    }

    fn __repr__(&self) -> String {
        format!(
            "Immersion(name={:?}, n={}, ambient={})",
            self.spec.name, self.spec.n, self.spec.ambient
        )
    }
}

fn run<'py>(
    py: Python<'py>,
    targets: Vec<Target>,
    suites: Vec<String>,
    points: usize,
    seed: u64,
    order: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = RunOptions {
        suites,
        points,
        seed,
        order,
        ..RunOptions::default()
    };
    let rep = py
        .detach(|| kangle::harness::run_suite(&targets, &opts))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &rep)
}

/// Parses immersion source text. Errors carry the line and column.
#[pyfunction]
#[pyo3(signature = (text, name = "immersion"))]
fn parse(text: &str, name: &str) -> PyResult<PyImmersion> {
    let mut spec = parse_immersion(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    spec.name = name.into();
    let t = Target::from_spec(name, spec);
    Ok(PyImmersion {
        spec: t.spec,
        domain: t.domain,
    })
}

/// A built-in catalog entry by name.
#[pyfunction]
fn entry(name: &str) -> PyResult<PyImmersion> {
    let e = find_entry(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown catalog entry `{name}`")))?;
    Ok(PyImmersion {
        spec: e.spec(),
        domain: e.domain.clone(),
    })
}

/// Names and descriptions of the built-in catalog.
#[pyfunction]
fn catalog() -> Vec<(String, String)> {
    builtin_catalog()
        .iter()
        .map(|e| (e.name.clone(), e.description.clone()))
        .collect()
}

/// Identity ids with one-line statements.
#[pyfunction]
fn identity_ids() -> Vec<(&'static str, &'static str)> {
    identities::IDENTITY_IDS.to_vec()
}

/// The sign calibration with all four candidates.
#[pyfunction]
fn calibrate(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let cal = identities::calibrate().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &cal)
}

/// Runs the identity suites over catalog entries, all of them by default.
#[pyfunction]
#[pyo3(signature = (entries = None, suites = vec!["all".to_string()], points = 64, seed = 0, order = 3))]
fn run_suite<'py>(
    py: Python<'py>,
    entries: Option<Vec<String>>,
    suites: Vec<String>,
    points: usize,
    seed: u64,
    order: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let targets = match entries {
        None => builtin_catalog().iter().map(Target::from_entry).collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                find_entry(n)
                    .map(|e| Target::from_entry(&e))
                    .ok_or_else(|| PyValueError::new_err(format!("unknown catalog entry `{n}`")))
            })
            .collect::<PyResult<_>>()?,
    };
    run(py, targets, suites, points, seed, order)
}

#[pymodule]
#[pyo3(name = "kangle")]
fn kangle_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImmersion>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(entry, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(identity_ids, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
