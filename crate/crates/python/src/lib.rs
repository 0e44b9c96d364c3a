//! Python bindings. Trees cross the boundary as 1-based parent lists
//! (`0` for the root) and frequency matrices as lists of rows.

use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ppm_core::search::{search_all, Scaling, SearchOptions, SearchSpec};
use ppm_core::{FrequencyMatrix, PpmError, PruferCode, RootedTree};

fn to_py(e: PpmError) -> PyErr {
    match e {
        PpmError::Degenerate(_) => PyArithmeticError::new_err(e.to_string()),
        PpmError::Invariant(_) | PpmError::Diverged(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Tree", frozen, module = "ppm_py")]
struct PyTree {
    inner: RootedTree,
}

#[pymethods]
impl PyTree {
    /// Builds a tree from parent labels: entry `i` is the parent of node
    /// `i + 1`, and node 1 has parent 0.
    #[new]
    fn new(parents: Vec<usize>) -> PyResult<Self> {
        RootedTree::from_parent_labels(&parents)
            .map(|inner| PyTree { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (code, q = None))]
    fn from_prufer(code: Vec<usize>, q: Option<usize>) -> PyResult<Self> {
        let q = q.unwrap_or(code.len() + 2);
        ppm_core::decode_prufer(&PruferCode(code), q)
            .map(|inner| PyTree { inner })
            .map_err(to_py)
    }

    fn parents(&self) -> Vec<usize> {
        self.inner.parent_labels()
    }

    fn prufer(&self) -> Vec<usize> {
        ppm_core::encode_prufer(&self.inner).0
    }

    fn children(&self, node: usize) -> PyResult<Vec<usize>> {
        if node == 0 || node > self.inner.len() {
            return Err(PyValueError::new_err(format!("node {node} outside 1..={}", self.inner.len())));
        }
        Ok(self.inner.children(node - 1).iter().map(|c| c + 1).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tree({:?})", self.inner.parent_labels())
    }
}

#[pyclass(name = "Projection", frozen, get_all, module = "ppm_py")]
struct PyProjection {
    t_star: f64,
    z_star: Vec<f64>,
    m_star: Vec<f64>,
    f_star: Vec<f64>,
    cost: f64,
}

#[pymethods]
impl PyProjection {
    fn __repr__(&self) -> String {
        format!("Projection(cost={}, t_star={})", self.cost, self.t_star)
    }
}

impl From<ppm_core::ProjectionResult> for PyProjection {
    fn from(r: ppm_core::ProjectionResult) -> Self {
        PyProjection {
            t_star: r.t_star,
            z_star: r.z_star,
            m_star: r.m_star,
            f_star: r.f_star,
            cost: r.cost,
        }
    }
}

/// Projects one sample column onto the model of `tree`.
#[pyfunction]
#[pyo3(signature = (tree, fhat, incremental = false))]
fn project(tree: &PyTree, fhat: Vec<f64>, incremental: bool) -> PyResult<PyProjection> {
    let r = if incremental {
        ppm_core::project_incremental(&tree.inner, &fhat)
    } else {
        ppm_core::project(&tree.inner, &fhat)
    };
    r.map(Into::into).map_err(to_py)
}

/// Projects every column of a matrix given as rows; returns the per-column
/// results and the Frobenius total cost.
#[pyfunction]
fn project_matrix(tree: &PyTree, rows: Vec<Vec<f64>>) -> PyResult<(Vec<PyProjection>, f64)> {
    let m = FrequencyMatrix::from_rows(rows).map_err(to_py)?;
    let r = ppm_core::project_matrix(&tree.inner, &m).map_err(to_py)?;
    Ok((r.columns.into_iter().map(Into::into).collect(), r.total_cost))
}

#[pyfunction]
fn count_trees(q: usize) -> PyResult<u64> {
    ppm_core::count_trees(q).map_err(to_py)
}

/// Exhaustive search; returns a dict with `trees_evaluated` and a `ranked`
/// list of dicts.
#[pyfunction]
#[pyo3(signature = (rows, k = 1, workers = None, scaling = "identity", force = false))]
fn search<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    k: usize,
    workers: Option<usize>,
    scaling: &str,
    force: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let m = FrequencyMatrix::from_rows(rows).map_err(to_py)?;
    let mut spec = SearchSpec::new(m, k).map_err(to_py)?;
    spec.scaling = scaling.parse::<Scaling>().map_err(to_py)?;
    let mut options = SearchOptions {
        force,
        ..SearchOptions::default()
    };
    if let Some(w) = workers {
        options.workers = w.max(1);
    }
    let report = py.detach(|| search_all(&spec, &options)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("q", report.q)?;
    out.set_item("trees_evaluated", report.trees_evaluated)?;
    out.set_item("elapsed_sec", report.elapsed_sec)?;
    let mut ranked = Vec::with_capacity(report.ranked.len());
    for r in report.ranked {
        let d = PyDict::new(py);
        d.set_item("rank", r.rank)?;
        d.set_item("prufer", r.prufer.0)?;
        d.set_item("parents", r.parents)?;
        d.set_item("objective", r.objective)?;
        d.set_item("cost", r.cost)?;
        ranked.push(d);
    }
    out.set_item("ranked", ranked)?;
    Ok(out)
}

#[pymodule]
fn ppm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_class::<PyProjection>()?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(project_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(count_trees, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    Ok(())
}
