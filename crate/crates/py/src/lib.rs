//! Python bindings. Fields cross the boundary as flat lists of complex numbers in node order
//! (index (i·m + j)·m + k), boundary fields as lists in boundary order.

use calkit::carleman::{
    calibrate, carleman_estimate, conjugated_inequality, poincare_ratio, sine_mode, zero_trace_corpus,
};
use calkit::cgo::{build_cgo, cgo_traces, decay_study, CgoKind};
use calkit::field::{BoundaryField, ScalarField};
use calkit::forward::{self, DnMap};
use calkit::geometry::{self, Frame, Vec3};
use calkit::identity::{self, ProbeMode, ProbeOptions};
use calkit::{io, liouville, CalError};
use num_complex::Complex64 as C64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: CalError) -> PyErr {
    match e {
        CalError::NonSolvable(_)
        | CalError::DnColumn { .. }
        | CalError::NoContraction { .. }
        | CalError::MaxIter { .. }
        | CalError::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: geometry::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (r = 2.0, l = 1.0, m = 17, big_m = 32))]
    fn new(r: f64, l: f64, m: usize, big_m: usize) -> PyResult<Self> {
        Ok(PyGrid { inner: geometry::make_grid(r, l, m, big_m).map_err(err)? })
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }
    #[getter]
    fn l(&self) -> f64 {
        self.inner.l
    }
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn big_m(&self) -> usize {
        self.inner.big_m
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }
    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }
    #[getter]
    fn n_boundary(&self) -> usize {
        self.inner.n_boundary()
    }

    fn positions(&self) -> Vec<Vec3> {
        (0..self.inner.n_nodes()).map(|g| self.inner.pos(g)).collect()
    }

    fn boundary_positions(&self) -> Vec<Vec3> {
        self.inner.boundary.iter().map(|b| self.inner.pos(b.node)).collect()
    }

    fn boundary_normals(&self) -> Vec<Vec3> {
        self.inner.boundary.iter().map(|b| b.normal()).collect()
    }

    fn boundary_weights(&self) -> Vec<f64> {
        self.inner.boundary.iter().map(|b| b.weight).collect()
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!("Grid(R={}, L={}, m={}, M={})", g.r, g.l, g.m, g.big_m)
    }
}

impl PyGrid {
    fn field(&self, values: Vec<C64>) -> PyResult<ScalarField> {
        ScalarField::from_values(&self.inner, values).map_err(err)
    }

    fn boundary(&self, values: Vec<C64>) -> PyResult<BoundaryField> {
        let f = BoundaryField { values };
        f.check_grid(&self.inner).map_err(err)?;
        Ok(f)
    }
}

#[pyclass(name = "DnMap", frozen)]
struct PyDnMap {
    inner: DnMap,
}

#[pymethods]
impl PyDnMap {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            forward::DnKind::Schrodinger => "schrodinger",
            forward::DnKind::Conductivity => "conductivity",
        }
    }

    #[getter]
    fn coeff_hash(&self) -> String {
        self.inner.coeff_hash.clone()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<C64> {
        if i >= self.inner.n || j >= self.inner.n {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(i, j))
    }

    fn apply(&self, f: Vec<C64>) -> PyResult<Vec<C64>> {
        Ok(self.inner.apply(&BoundaryField { values: f }).map_err(err)?.values)
    }

    fn rows(&self) -> Vec<Vec<C64>> {
        self.inner.matrix.chunks_exact(self.inner.n).map(|r| r.to_vec()).collect()
    }

    fn max_abs_diff(&self, other: &PyDnMap) -> PyResult<f64> {
        self.inner.max_abs_diff(&other.inner).map_err(err)
    }

    fn to_csv(&self) -> String {
        io::dn_to_csv(&self.inner)
    }
}

#[pyclass(name = "Cgo", frozen, get_all)]
struct PyCgo {
    v: Vec<C64>,
    w: Vec<C64>,
    dirichlet: Vec<C64>,
    w_l2: f64,
    w_h2: f64,
    residual: f64,
    iterations: usize,
    history: Vec<f64>,
    fixed_point_residual: f64,
    in_unit_ball: bool,
}

#[pyclass(name = "Reconstruction", frozen, get_all)]
struct PyReconstruction {
    q_rec: Vec<C64>,
    error: f64,
    truncation_error: f64,
    hermitian_defect: f64,
    failed: Vec<([i32; 3], String)>,
}

#[pyfunction]
fn gaussian_bump(grid: &PyGrid, amp: f64, sigma: f64) -> Vec<C64> {
    ScalarField::from_real_fn(&grid.inner, |x| amp * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * sigma * sigma)).exp())
        .values
}

#[pyfunction]
fn solve_schrodinger(grid: &PyGrid, q: Vec<C64>, phi: Vec<C64>) -> PyResult<Vec<C64>> {
    let (q, phi) = (grid.field(q)?, grid.boundary(phi)?);
    Ok(forward::solve_schrodinger(&grid.inner, &q, &phi).map_err(err)?.values)
}

#[pyfunction]
fn solve_conductivity(grid: &PyGrid, a: Vec<C64>, phi: Vec<C64>) -> PyResult<Vec<C64>> {
    let (a, phi) = (grid.field(a)?, grid.boundary(phi)?);
    Ok(forward::solve_conductivity(&grid.inner, &a, &phi).map_err(err)?.values)
}

#[pyfunction]
fn neumann_trace(grid: &PyGrid, v: Vec<C64>) -> PyResult<Vec<C64>> {
    Ok(forward::neumann_trace(&grid.field(v)?, &grid.inner).values)
}

#[pyfunction]
fn dn_map_schrodinger(py: Python<'_>, grid: &PyGrid, q: Vec<C64>) -> PyResult<PyDnMap> {
    let q = grid.field(q)?;
    let inner = py.detach(|| forward::dn_map_schrodinger(&grid.inner, &q)).map_err(err)?;
    Ok(PyDnMap { inner })
}

#[pyfunction]
fn dn_map_conductivity(py: Python<'_>, grid: &PyGrid, a: Vec<C64>) -> PyResult<PyDnMap> {
    let a = grid.field(a)?;
    let inner = py.detach(|| forward::dn_map_conductivity(&grid.inner, &a)).map_err(err)?;
    Ok(PyDnMap { inner })
}

#[pyfunction]
fn potential_of(grid: &PyGrid, a: Vec<C64>) -> PyResult<Vec<C64>> {
    Ok(liouville::potential_of(&grid.field(a)?, &grid.inner).map_err(err)?.values)
}

#[pyfunction]
fn liouville_defect(py: Python<'_>, grid: &PyGrid, a: Vec<C64>) -> PyResult<f64> {
    let a = grid.field(a)?;
    py.detach(|| liouville::liouville_defect(&a, &grid.inner)).map_err(err)
}

fn kind_of(kind: &str) -> PyResult<CgoKind> {
    match kind {
        "type1" => Ok(CgoKind::Type1),
        "type2" => Ok(CgoKind::Type2),
        _ => Err(PyValueError::new_err(format!("unknown CGO kind {kind:?}"))),
    }
}

#[pyfunction]
#[pyo3(name = "build_cgo", signature = (grid, q, xi, rho, kind = "type1", tol = 1e-10, max_iter = 50))]
fn py_build_cgo(grid: &PyGrid, q: Vec<C64>, xi: Vec3, rho: f64, kind: &str, tol: f64, max_iter: usize) -> PyResult<PyCgo> {
    let q = grid.field(q)?;
    let fr = Frame::new(xi, rho).map_err(err)?;
    let s = build_cgo(&q, &fr, kind_of(kind)?, &grid.inner, tol, max_iter).map_err(err)?;
    let dirichlet = cgo_traces(&s, &grid.inner).map_err(err)?.dirichlet.values;
    Ok(PyCgo {
        v: s.v.values,
        w: s.w.values,
        dirichlet,
        w_l2: s.w_l2,
        w_h2: s.w_h2,
        residual: s.residual,
        iterations: s.iterations,
        history: s.history,
        fixed_point_residual: s.fixed_point_residual,
        in_unit_ball: s.in_unit_ball,
    })
}

/// Returns (rho, |w|_L2) rows and the fitted log-log slope.
#[pyfunction]
#[pyo3(signature = (grid, q, xi, rhos, tol = 1e-10, max_iter = 50))]
fn cgo_decay(
    grid: &PyGrid,
    q: Vec<C64>,
    xi: Vec3,
    rhos: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<(Vec<(f64, f64)>, Option<f64>)> {
    let t = decay_study(&grid.field(q)?, xi, &rhos, &grid.inner, tol, max_iter).map_err(err)?;
    Ok((t.rows.iter().map(|r| (r.rho, r.w_l2)).collect(), t.l2_slope))
}

#[pyfunction]
fn alessandrini_pair(grid: &PyGrid, la: &PyDnMap, lb: &PyDnMap, f1: Vec<C64>, f2: Vec<C64>) -> PyResult<C64> {
    let (f1, f2) = (grid.boundary(f1)?, grid.boundary(f2)?);
    identity::alessandrini_pair(&la.inner, &lb.inner, &f1, &f2, &grid.inner).map_err(err)
}

fn probe_opts(mode: &str, tol: f64, max_iter: usize) -> PyResult<ProbeOptions> {
    let mode = match mode {
        "faithful" => ProbeMode::Faithful,
        "born" => ProbeMode::Born,
        _ => return Err(PyValueError::new_err(format!("unknown probe mode {mode:?}"))),
    };
    Ok(ProbeOptions { mode, tol, max_iter })
}

#[pyfunction]
#[pyo3(signature = (grid, la, lb, qa, qb, xi, rho, mode = "faithful", tol = 1e-10, max_iter = 50))]
#[allow(clippy::too_many_arguments)]
fn fourier_sample(
    grid: &PyGrid,
    la: &PyDnMap,
    lb: &PyDnMap,
    qa: Vec<C64>,
    qb: Vec<C64>,
    xi: Vec3,
    rho: f64,
    mode: &str,
    tol: f64,
    max_iter: usize,
) -> PyResult<C64> {
    let (qa, qb) = (grid.field(qa)?, grid.field(qb)?);
    let s = identity::fourier_sample(&la.inner, &lb.inner, &qa, &qb, xi, rho, &grid.inner, &probe_opts(mode, tol, max_iter)?)
        .map_err(err)?;
    Ok(s.value)
}

#[pyfunction]
fn exact_fourier(grid: &PyGrid, q: Vec<C64>, xi: Vec3) -> PyResult<C64> {
    Ok(identity::exact_fourier(&grid.field(q)?, xi, &grid.inner))
}

#[pyfunction]
#[pyo3(signature = (grid, la, lb, qa, qb, xi_max, rho, mode = "faithful", tol = 1e-10, max_iter = 50))]
#[allow(clippy::too_many_arguments)]
fn reconstruct_potential(
    py: Python<'_>,
    grid: &PyGrid,
    la: &PyDnMap,
    lb: &PyDnMap,
    qa: Vec<C64>,
    qb: Vec<C64>,
    xi_max: i32,
    rho: f64,
    mode: &str,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyReconstruction> {
    let (qa, qb) = (grid.field(qa)?, grid.field(qb)?);
    let opts = probe_opts(mode, tol, max_iter)?;
    let r = py
        .detach(|| identity::reconstruct_potential(&la.inner, &lb.inner, &qa, &qb, xi_max, rho, &grid.inner, &opts))
        .map_err(err)?;
    Ok(PyReconstruction {
        q_rec: r.q_rec.values,
        error: r.error,
        truncation_error: r.truncation_error,
        hermitian_defect: r.hermitian_defect,
        failed: r.failed,
    })
}

#[pyfunction]
#[pyo3(name = "sine_mode")]
fn py_sine_mode(grid: &PyGrid) -> Vec<C64> {
    sine_mode(&grid.inner).values
}

#[pyfunction]
#[pyo3(name = "zero_trace_corpus")]
fn py_zero_trace_corpus(grid: &PyGrid, count: usize, seed: u64) -> Vec<Vec<C64>> {
    zero_trace_corpus(&grid.inner, count, seed).into_iter().map(|f| f.values).collect()
}

#[pyfunction]
#[pyo3(name = "poincare_ratio")]
fn py_poincare_ratio(grid: &PyGrid, w: Vec<C64>, eta1: Vec3) -> PyResult<(f64, f64)> {
    poincare_ratio(&grid.field(w)?, eta1, &grid.inner).map_err(err)
}

#[pyfunction]
#[pyo3(name = "conjugated_inequality")]
fn py_conjugated_inequality(grid: &PyGrid, v: Vec<C64>, rho: f64, eta1: Vec3) -> PyResult<(f64, f64)> {
    let r = conjugated_inequality(&grid.field(v)?, rho, eta1, &grid.inner).map_err(err)?;
    Ok((r.lhs, r.rhs))
}

/// Calibrates C₀ on a seeded q = 0 corpus, then evaluates the weighted estimate for `v` and `q`.
/// Returns (lhs, rhs, C used, ρ₂, holds).
#[pyfunction]
#[pyo3(name = "carleman_estimate", signature = (grid, v, q, rho, eta1, calib_samples = 100, seed = 0, calib_rho = vec![2.0, 4.0, 8.0]))]
#[allow(clippy::too_many_arguments)]
fn py_carleman_estimate(
    grid: &PyGrid,
    v: Vec<C64>,
    q: Vec<C64>,
    rho: f64,
    eta1: Vec3,
    calib_samples: usize,
    seed: u64,
    calib_rho: Vec<f64>,
) -> PyResult<(f64, f64, f64, f64, bool)> {
    let g = &grid.inner;
    let cal = calibrate(g, &zero_trace_corpus(g, calib_samples, seed), &calib_rho, eta1).map_err(err)?;
    let r = carleman_estimate(&grid.field(v)?, &grid.field(q)?, rho, eta1, g, &cal.constants()).map_err(err)?;
    Ok((r.lhs, r.rhs, r.c_used, r.rho2, r.holds))
}

#[pyfunction]
fn dump_field(grid: &PyGrid, values: Vec<C64>, path: std::path::PathBuf) -> PyResult<()> {
    io::dump_field(&grid.field(values)?, &path).map_err(err)
}

/// Returns (m, L, values).
#[pyfunction]
fn load_field(path: std::path::PathBuf) -> PyResult<(usize, f64, Vec<C64>)> {
    let f = io::load_field(&path, None).map_err(err)?;
    Ok((f.m, f.l, f.values))
}

#[pymodule]
fn pycalkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyDnMap>()?;
    m.add_class::<PyCgo>()?;
    m.add_class::<PyReconstruction>()?;
    m.add_function(wrap_pyfunction!(gaussian_bump, m)?)?;
    m.add_function(wrap_pyfunction!(solve_schrodinger, m)?)?;
    m.add_function(wrap_pyfunction!(solve_conductivity, m)?)?;
    m.add_function(wrap_pyfunction!(neumann_trace, m)?)?;
    m.add_function(wrap_pyfunction!(dn_map_schrodinger, m)?)?;
    m.add_function(wrap_pyfunction!(dn_map_conductivity, m)?)?;
    m.add_function(wrap_pyfunction!(potential_of, m)?)?;
    m.add_function(wrap_pyfunction!(liouville_defect, m)?)?;
    m.add_function(wrap_pyfunction!(py_build_cgo, m)?)?;
    m.add_function(wrap_pyfunction!(cgo_decay, m)?)?;
    m.add_function(wrap_pyfunction!(alessandrini_pair, m)?)?;
    m.add_function(wrap_pyfunction!(fourier_sample, m)?)?;
    m.add_function(wrap_pyfunction!(exact_fourier, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_potential, m)?)?;
    m.add_function(wrap_pyfunction!(py_sine_mode, m)?)?;
    m.add_function(wrap_pyfunction!(py_zero_trace_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(py_poincare_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(py_conjugated_inequality, m)?)?;
    m.add_function(wrap_pyfunction!(py_carleman_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(dump_field, m)?)?;
    m.add_function(wrap_pyfunction!(load_field, m)?)?;
    Ok(())
}
