//! Python bindings for the `dkglab` crate.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dkglab::dirac::{self, DiracRep, Sign};
use dkglab::grid::GridSpec2;
use dkglab::harness::{self, FamilyId};
use dkglab::norms::sobolev_norm;
use dkglab::solver::{self, DKGState, InitialData, SolverConfig};
use dkglab::waves::{self, HhExponents};

fn to_py(e: dkglab::Error) -> PyErr {
    match e {
        dkglab::Error::NumericalAbort { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn sign(s: &str) -> PyResult<Sign> {
    s.parse().map_err(to_py)
}

/// Periodic `n x n` grid on a square box.
#[pyclass(frozen, module = "dkglab_py")]
pub struct Grid {
    inner: GridSpec2,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(n: usize, box_len: f64) -> PyResult<Self> {
        Ok(Self { inner: GridSpec2::new(n, box_len).map_err(to_py)? })
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }
    #[getter]
    fn box_len(&self) -> f64 {
        self.inner.box_len()
    }
    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }
    #[getter]
    fn dxi(&self) -> f64 {
        self.inner.dxi()
    }
    fn __repr__(&self) -> String {
        format!("Grid(n={}, box_len={})", self.inner.n(), self.inner.box_len())
    }
}

/// Fitted scaling of one counterexample family.
#[pyclass(frozen, module = "dkglab_py")]
pub struct ScalingReport {
    inner: harness::ScalingReport,
}

#[pymethods]
impl ScalingReport {
    #[getter]
    fn family(&self) -> String {
        self.inner.family.to_string()
    }
    #[getter]
    fn s(&self) -> f64 {
        self.inner.s
    }
    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }
    #[getter]
    fn fitted_slope(&self) -> f64 {
        self.inner.fitted_slope
    }
    #[getter]
    fn predicted_slope(&self) -> f64 {
        self.inner.predicted_slope
    }
    #[getter]
    fn passed(&self) -> bool {
        self.inner.pass
    }
    /// `(L, lhs, rhs, ratio)` per size.
    #[getter]
    fn rows(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner.rows.iter().map(|r| (r.l, r.lhs, r.rhs, r.ratio)).collect()
    }
    fn to_csv(&self) -> String {
        dkglab::report::scaling_csv(std::slice::from_ref(&self.inner))
    }
}

/// Solver state at one time.
#[pyclass(frozen, module = "dkglab_py")]
pub struct State {
    inner: DKGState,
}

#[pymethods]
impl State {
    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }
    fn charge(&self) -> f64 {
        solver::charge(&self.inner)
    }
    fn psi_norm(&self, s: f64) -> f64 {
        solver::spinor_sobolev_norm(&self.inner, s)
    }
    fn phi_norm(&self, r: f64) -> PyResult<f64> {
        sobolev_norm(&self.inner.phi, r, false).map_err(to_py)
    }
    /// Real part of the wave field on the physical grid, row by row.
    fn phi(&self) -> Vec<Vec<f64>> {
        let f = self.inner.phi.to_physical();
        let n = f.grid().n();
        f.values().chunks(n).map(|row| row.iter().map(|z| z.re).collect()).collect()
    }
    fn snapshot(&self) -> PyResult<Vec<u8>> {
        let mut out = Vec::new();
        dkglab::report::write_snapshot(&mut out, &self.inner).map_err(to_py)?;
        Ok(out)
    }
}

/// `(op_norm, angle)` of the null symbol.
#[pyfunction]
fn null_symbol(sign1: &str, sign2: &str, eta: [f64; 2], zeta: [f64; 2]) -> PyResult<(f64, f64)> {
    let v = dirac::null_symbol(sign(sign1)?, sign(sign2)?, eta, zeta).map_err(to_py)?;
    Ok((v.op_norm, v.angle))
}

/// `(passed, first_failure)` of the randomized algebra suite for the Pauli matrices.
#[pyfunction]
#[pyo3(signature = (samples = 100_000, seed = 1, tol = 1e-12))]
fn verify_algebra(samples: usize, seed: u64, tol: f64) -> (bool, Option<String>) {
    let r = dirac::algebra_suite(&DiracRep::pauli(), samples, seed, tol);
    (r.pass(), r.first_failure())
}

/// `(verdict, violated constraints)`.
#[pyfunction]
fn region(s: f64, r: f64) -> (String, Vec<String>) {
    let rep = harness::region_check(s, r);
    (rep.verdict.to_string(), rep.violated)
}

#[pyfunction]
#[pyo3(signature = (family, s, r, ls = vec![8.0, 16.0, 32.0, 64.0], delta0 = 1.0))]
fn fit_scaling(family: &str, s: f64, r: f64, ls: Vec<f64>, delta0: f64) -> PyResult<ScalingReport> {
    let id: FamilyId = family.parse().map_err(to_py)?;
    Ok(ScalingReport { inner: harness::fit_scaling(id, s, r, &ls, delta0).map_err(to_py)? })
}

/// High-high to low ratios, one per `lambda`.
#[pyfunction]
#[pyo3(signature = (lambdas, same_sign = true, s1 = 0.125, s2 = 0.125, s3 = 0.25, aperture = 1.0 / 64.0))]
fn hh_scan(lambdas: Vec<f64>, same_sign: bool, s1: f64, s2: f64, s3: f64, aperture: f64) -> PyResult<Vec<f64>> {
    let s = if same_sign { Sign::Plus } else { Sign::Minus };
    let pts = waves::hh_scan(&lambdas, s, HhExponents { s1, s2, s3 }, aperture).map_err(to_py)?;
    Ok(pts.iter().map(|p| p.parts.ratio).collect())
}

fn initial_data(grid: &Grid, data: &str, amp: f64, seed: u64) -> PyResult<InitialData> {
    match data {
        "gaussian" => Ok(InitialData::gaussian(grid.inner, amp)),
        "rough" => Ok(InitialData::rough(grid.inner, amp, 0.25, 0.75, seed)),
        other => Err(PyValueError::new_err(format!("data must be 'gaussian' or 'rough', got {other:?}"))),
    }
}

/// Integrates and returns `((time, charge, |psi|_{H^s}, |phi|_{H^r}) per step, final state)`.
#[pyfunction]
#[pyo3(signature = (grid, dt, t_final, data = "gaussian", amp = 1.0, seed = 1, s = 0.0, r = 0.0))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn solve(
    grid: &Grid,
    dt: f64,
    t_final: f64,
    data: &str,
    amp: f64,
    seed: u64,
    s: f64,
    r: f64,
) -> PyResult<(Vec<(f64, f64, f64, f64)>, State)> {
    let d = initial_data(grid, data, amp, seed)?;
    let cfg = SolverConfig { seed, ..SolverConfig::new(grid.inner, dt, t_final) };
    let mut rows = Vec::new();
    let mut last = None;
    solver::solve_with(&d, &cfg, |st| {
        rows.push((st.time, solver::charge(st), solver::spinor_sobolev_norm(st, s), sobolev_norm(&st.phi, r, false)?));
        last = Some(st.clone());
        Ok(())
    })
    .map_err(to_py)?;
    Ok((rows, State { inner: last.expect("at least the initial state") }))
}

/// `(d_psi, d_phi)` between successive Picard iterates.
#[pyfunction]
#[pyo3(signature = (grid, dt, t_final, depth = 5, amp = 0.5, seed = 7, s = 0.0, r = 0.5))]
#[allow(clippy::too_many_arguments)]
fn picard(grid: &Grid, dt: f64, t_final: f64, depth: usize, amp: f64, seed: u64, s: f64, r: f64) -> PyResult<Vec<(f64, f64)>> {
    let d = initial_data(grid, "rough", amp, seed)?;
    let it = solver::picard_iterates(&d, &SolverConfig::new(grid.inner, dt, t_final), depth).map_err(to_py)?;
    Ok(solver::picard_differences(&it, s, r))
}

/// `H^sigma` norm of the first iterate at time `t` from rough spinor data of regularity `data_s`.
#[pyfunction]
#[pyo3(signature = (grid, sigma, t = 1.0, data_s = 0.0, seed = 1))]
fn first_iterate_norm(grid: &Grid, sigma: f64, t: f64, data_s: f64, seed: u64) -> PyResult<f64> {
    let psi = solver::rough_data(data_s, seed, &grid.inner);
    solver::first_iterate_regularity(&psi, sigma, t).map_err(to_py)
}

#[pymodule]
fn dkglab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<ScalingReport>()?;
    m.add_class::<State>()?;
    m.add_function(wrap_pyfunction!(null_symbol, m)?)?;
    m.add_function(wrap_pyfunction!(verify_algebra, m)?)?;
    m.add_function(wrap_pyfunction!(region, m)?)?;
    m.add_function(wrap_pyfunction!(fit_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(hh_scan, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(picard, m)?)?;
    m.add_function(wrap_pyfunction!(first_iterate_norm, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_calls_work_without_an_interpreter() {
        let (ok, failure) = verify_algebra(2000, 3, 1e-12);
        assert!(ok && failure.is_none());
        let (v, violated) = region(-0.2, 0.3);
        assert_eq!(v, "outside");
        assert!(!violated.is_empty());
        let (n, a) = null_symbol("+", "+", [1.0, 0.0], [0.0, 1.0]).unwrap();
        assert!((n - (a / 2.0).sin()).abs() < 1e-12);
        let g = Grid::new(16, 8.0).unwrap();
        assert_eq!(g.n(), 16);
        assert!((g.dx() - 0.5).abs() < 1e-15);
    }
}
