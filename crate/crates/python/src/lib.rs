//! Python bindings: matrices travel as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use holonomy_core::geometry::{self, builtin_family, ConnectionField, FamilyParams, BUILTIN_FAMILIES};
use holonomy_core::harness::{self as core_harness, ExperimentManifest, Member, Overrides, SemicontinuityReport};
use holonomy_core::linalg::{self, SqrtMethod};
use holonomy_core::subgroup::{self, ConjugacyClass};
use holonomy_core::transport::{circle_loop, parallel_transport};
use holonomy_core::{config, Error, Matrix};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn member(k: Option<u32>) -> Member {
    k.map_or(Member::Limit, Member::K)
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Names of the built-in metric families.
#[pyfunction]
fn families() -> Vec<&'static str> {
    BUILTIN_FAMILIES.to_vec()
}

/// Symmetric positive-definite square root, by `"power_series"` or `"eigen"`.
#[pyfunction]
#[pyo3(signature = (z, method = "power_series", tol = 1e-15))]
fn sym_sqrt(z: Vec<Vec<f64>>, method: &str, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    let method = match method {
        "power_series" => SqrtMethod::PowerSeries,
        "eigen" => SqrtMethod::Eigen,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    linalg::sym_sqrt(&to_matrix(z)?, method, tol).map(|w| to_rows(&w)).map_err(py_err)
}

/// `‖AᵀMA − M‖_F + |det A − 1|`.
#[pyfunction]
fn so_residual(a: Vec<Vec<f64>>, m: Vec<Vec<f64>>) -> PyResult<f64> {
    let (a, m) = (to_matrix(a)?, to_matrix(m)?);
    if a.shape() != m.shape() || a.nrows() != a.ncols() {
        return Err(PyValueError::new_err("a and m must be square of equal size"));
    }
    Ok(linalg::so_residual(&a, &m))
}

#[pyfunction]
#[pyo3(signature = (a, tol = 1e-14))]
fn principal_log(a: Vec<Vec<f64>>, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    linalg::principal_log(&to_matrix(a)?, tol).map(|l| to_rows(&l)).map_err(py_err)
}

#[pyfunction]
fn expm(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&linalg::expm(&to_matrix(x)?)))
}

/// Catalog of subgroups of `SO(l)` as `(id, group_dim)` pairs.
#[pyfunction]
fn catalog(l: usize) -> PyResult<Vec<(String, usize)>> {
    subgroup::catalog(l)
        .map(|c| c.into_iter().map(|s| (s.id.clone(), s.group_dim())).collect())
        .map_err(py_err)
}

/// `[a] ≤ [b]` between catalog entries of `SO(dim)`.
#[pyfunction]
#[pyo3(signature = (a, b, dim, restarts = config::RESTARTS, tol = config::CLASSIFY_TOL, seed = config::SEED))]
fn order<'py>(py: Python<'py>, a: &str, b: &str, dim: usize, restarts: usize, tol: f64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let sa = subgroup::catalog_entry(dim, a).map_err(py_err)?;
    let sb = subgroup::catalog_entry(dim, b).map_err(py_err)?;
    let v = subgroup::leq(&ConjugacyClass::Subgroup(sa), &ConjugacyClass::Subgroup(sb), restarts, tol, seed).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("holds", v.holds)?;
    out.set_item("residual", v.residual)?;
    out.set_item("witness", to_rows(&v.witness))?;
    out.set_item("restarts_used", v.restarts_used)?;
    Ok(out)
}

/// Result of a semicontinuity experiment.
#[pyclass(name = "SemicontinuityReport", frozen)]
struct PyReport {
    inner: SemicontinuityReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn semicontinuity(&self) -> bool {
        self.inner.summary.semicontinuity
    }

    #[getter]
    fn strict(&self) -> bool {
        self.inner.summary.strict
    }

    #[getter]
    fn exit_code(&self) -> i32 {
        self.inner.exit_code()
    }

    /// Member rows followed by the limit row, as dicts.
    #[getter]
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rows: Vec<_> = self.inner.all_rows().collect();
        json_to_py(py, &rows)
    }

    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.summary)
    }

    fn to_csv(&self) -> String {
        core_harness::to_csv(&self.inner)
    }

    fn to_text(&self) -> String {
        core_harness::to_text(&self.inner)
    }

    /// Writes `report.csv` and `summary.txt`; returns their paths.
    fn write(&self, directory: &str) -> PyResult<(String, String)> {
        let files = core_harness::render_report(&self.inner, std::path::Path::new(directory)).map_err(py_err)?;
        Ok((files.csv.display().to_string(), files.text.display().to_string()))
    }
}

/// Runs the experiment described by a JSON manifest.
#[pyfunction]
#[pyo3(signature = (manifest_json, steps = None, seed = None, restarts = None))]
fn run_semicontinuity(py: Python<'_>, manifest_json: &str, steps: Option<usize>, seed: Option<u64>, restarts: Option<usize>) -> PyResult<PyReport> {
    let mut manifest = ExperimentManifest::from_json(manifest_json).map_err(py_err)?;
    manifest.apply(&Overrides { steps, seed, restarts });
    let report = py.detach(|| core_harness::run_semicontinuity(&manifest)).map_err(py_err)?;
    Ok(PyReport { inner: report })
}

/// A built-in metric family `k ↦ g_k` on its chart. `k = None` is the limit.
#[pyclass(name = "MetricFamily", frozen)]
struct PyMetricFamily {
    inner: geometry::MetricFamily,
    params: FamilyParams,
}

impl PyMetricFamily {
    fn metric_field(&self, k: Option<u32>) -> PyResult<geometry::MetricField> {
        match k {
            Some(k) => self.inner.member(k).map_err(py_err),
            None => Ok(self.inner.limit().clone()),
        }
    }

    fn point(&self, x: Option<Vec<f64>>) -> Vec<f64> {
        x.unwrap_or_else(|| self.inner.basepoint.clone())
    }
}

#[pymethods]
impl PyMetricFamily {
    #[new]
    #[pyo3(signature = (name, params = None))]
    fn new(name: &str, params: Option<FamilyParams>) -> PyResult<Self> {
        let params = params.unwrap_or_default();
        let inner = builtin_family(name, &params).map_err(py_err)?;
        Ok(Self { inner, params })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn basepoint(&self) -> Vec<f64> {
        self.inner.basepoint.clone()
    }

    /// Metric matrix at `x` (default: the basepoint).
    #[pyo3(signature = (k = None, x = None))]
    fn metric(&self, k: Option<u32>, x: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = self.point(x);
        self.inner.chart.check_interior(&x).map_err(py_err)?;
        Ok(to_rows(&self.metric_field(k)?.evaluate(&x)))
    }

    /// Levi-Civita coefficient matrices `(A_i)_{kj} = Γ^k_{ij}` at `x`.
    #[pyo3(signature = (k = None, x = None))]
    fn christoffel(&self, k: Option<u32>, x: Option<Vec<f64>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let metric = self.metric_field(k)?;
        let chart = &self.inner.chart;
        geometry::christoffel(&metric, &self.point(x), chart.default_step(), chart)
            .map(|a| a.iter().map(to_rows).collect())
            .map_err(py_err)
    }

    /// Transport around the counter-clockwise circle of `radius` about
    /// `center` in the `(0, 1)` plane, starting at `center + radius·e₀`.
    /// Returns `(matrix, error_estimate, so_defect)`.
    #[pyo3(signature = (center, radius, k = None, steps = config::STEPS))]
    fn transport_circle(
        &self,
        py: Python<'_>,
        center: Vec<f64>,
        radius: f64,
        k: Option<u32>,
        steps: usize,
    ) -> PyResult<(Vec<Vec<f64>>, f64, f64)> {
        let metric = self.metric_field(k)?;
        let chart = &self.inner.chart;
        let path = circle_loop(&center, radius, "circle").map_err(py_err)?;
        let form = metric.form(&path.basepoint).map_err(py_err)?;
        let conn = ConnectionField::levi_civita(&metric, chart.default_step());
        let t = py
            .detach(|| parallel_transport(&conn, &path, chart, &form, steps))
            .map_err(py_err)?;
        Ok((to_rows(&t.matrix), t.error_estimate, t.so_defect))
    }

    /// Classifies the holonomy at the basepoint against the catalog of `SO(dim)`.
    /// Returns `(subgroup_id, residual, algebra_dim)`.
    #[pyo3(signature = (k = None, steps = config::STEPS, restarts = config::RESTARTS, seed = config::SEED))]
    fn classify(&self, py: Python<'_>, k: Option<u32>, steps: usize, restarts: usize, seed: u64) -> PyResult<(String, f64, usize)> {
        let manifest = ExperimentManifest {
            family: core_harness::FamilySection {
                name: self.inner.name.clone(),
                params: self.params.clone(),
            },
            chart: Some(self.inner.chart.clone()),
            basepoint: Some(self.inner.basepoint.clone()),
            ks: vec![k.unwrap_or(1)],
            loops: Default::default(),
            integrator: core_harness::IntegratorSection { steps },
            estimation: Default::default(),
            classification: core_harness::ClassificationSection {
                target: "trivial".into(),
                restarts,
                tol: config::CLASSIFY_TOL,
                seed,
            },
            outputs: Default::default(),
        };
        let experiment = manifest.resolve().map_err(py_err)?;
        let p = py.detach(|| experiment.pipeline(member(k))).map_err(py_err)?;
        Ok((p.classification.id().to_string(), p.classification.residual, p.estimate.dim))
    }

    fn __repr__(&self) -> String {
        format!("MetricFamily({:?}, dim={})", self.inner.name, self.inner.dim())
    }
}

#[pymodule]
fn holonomy_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(families, m)?)?;
    m.add_function(wrap_pyfunction!(sym_sqrt, m)?)?;
    m.add_function(wrap_pyfunction!(so_residual, m)?)?;
    m.add_function(wrap_pyfunction!(principal_log, m)?)?;
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(order, m)?)?;
    m.add_function(wrap_pyfunction!(run_semicontinuity, m)?)?;
    m.add_class::<PyMetricFamily>()?;
    m.add_class::<PyReport>()?;
    Ok(())
}
