//! Python bindings for the synchronization toolbox: the FEM plant model,
//! graph topologies, gain containers, simulations, and the dense
//! matrix-equation solvers, with plain lists crossing the boundary.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use netsync::{designs, error::Error, fem, graph, mateq, network, sim};

fn to_py_err(e: Error) -> PyErr {
    match &e {
        Error::Config { .. } | Error::InvalidInput(_) | Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vector_from(values: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(values)
}

fn matrix_from(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have unequal lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn states_from(states: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    states.into_iter().map(DVector::from_vec).collect()
}

/// One-dimensional diffusion plant discretized with linear splines.
#[pyclass(frozen)]
struct Fem {
    inner: fem::FemModel,
}

#[pymethods]
impl Fem {
    #[new]
    #[pyo3(signature = (n, a1, pulse_center=0.5, pulse_width=0.1, c_k=5e-4, c_f=1e-2))]
    fn new(
        n: usize,
        a1: f64,
        pulse_center: f64,
        pulse_width: f64,
        c_k: f64,
        c_f: f64,
    ) -> PyResult<Fem> {
        let inner =
            fem::build_fem(n, a1, pulse_center, pulse_width, c_k, c_f).map_err(to_py_err)?;
        Ok(Fem { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes()
    }

    fn b_vec(&self) -> Vec<f64> {
        self.inner.b_vec.iter().copied().collect()
    }

    /// Generalized eigenvalues of (stiffness, mass), ascending.
    fn dirichlet_spectrum(&self) -> Vec<f64> {
        self.inner.dirichlet_spectrum()
    }

    fn l2_norm(&self, u: Vec<f64>) -> PyResult<f64> {
        fem::l2_norm(&self.inner, &vector_from(u)).map_err(to_py_err)
    }

    /// The five benchmark initial profiles sampled at the mesh nodes.
    fn benchmark_initial_states(&self) -> Vec<Vec<f64>> {
        fem::benchmark_initial_states(&self.inner)
            .into_iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Fem(n={}, a1={})", self.inner.n, self.inner.a1)
    }
}

/// Undirected communication graph over the agents.
#[pyclass(frozen)]
struct Topology {
    inner: graph::Topology,
}

#[pymethods]
impl Topology {
    #[new]
    fn new(n_agents: usize, edges: Vec<(usize, usize)>) -> PyResult<Topology> {
        let inner = graph::Topology::new(n_agents, &edges).map_err(to_py_err)?;
        Ok(Topology { inner })
    }

    /// The five-agent benchmark graph.
    #[staticmethod]
    fn benchmark() -> Topology {
        Topology {
            inner: graph::Topology::benchmark(),
        }
    }

    #[staticmethod]
    fn all_to_all(n_agents: usize) -> PyResult<Topology> {
        let inner = graph::Topology::all_to_all(n_agents).map_err(to_py_err)?;
        Ok(Topology { inner })
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    /// Undirected edges, 1-based.
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges_one_based()
    }

    /// Directed pairs in canonical order, 1-based; one gain slot each.
    fn ordered_pairs(&self) -> Vec<(usize, usize)> {
        self.inner
            .ordered_pairs()
            .iter()
            .map(|&(i, j)| (i + 1, j + 1))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Topology(n_agents={}, edges={:?})",
            self.inner.n_agents(),
            self.inner.edges_one_based()
        )
    }
}

/// Per-pair coupling gains on a topology.
#[pyclass(frozen)]
struct Gains {
    inner: graph::EdgeGains,
}

#[pymethods]
impl Gains {
    /// Same value on every directed pair.
    #[staticmethod]
    fn uniform(topo: &Topology, alpha: f64) -> PyResult<Gains> {
        let inner = graph::EdgeGains::uniform(&topo.inner, alpha).map_err(to_py_err)?;
        Ok(Gains { inner })
    }

    /// Values in canonical pair order (see `Topology.ordered_pairs`).
    #[staticmethod]
    fn from_values(topo: &Topology, values: Vec<f64>) -> PyResult<Gains> {
        let inner = graph::EdgeGains::unchecked(&topo.inner, values).map_err(to_py_err)?;
        Ok(Gains { inner })
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Gain on the directed pair (i, j), 1-based.
    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        if i == 0 || j == 0 {
            return Err(PyValueError::new_err("agent indices are 1-based"));
        }
        self.inner
            .get(i - 1, j - 1)
            .ok_or_else(|| PyValueError::new_err(format!("({i}, {j}) is not an edge")))
    }

    fn __repr__(&self) -> String {
        format!("Gains({:?})", self.inner.values())
    }
}

/// Scalar metrics recorded along a simulation.
#[pyclass(frozen)]
struct Trace {
    inner: sim::SimTrace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn x_norm(&self) -> Vec<f64> {
        self.inner.x_norm.clone()
    }

    #[getter]
    fn z_norm(&self) -> Vec<f64> {
        self.inner.z_norm.clone()
    }

    #[getter]
    fn w_value(&self) -> Vec<f64> {
        self.inner.w_value.clone()
    }

    /// Per-step gains in canonical pair order; empty for constant runs.
    #[getter]
    fn gain_history(&self) -> Vec<Vec<f64>> {
        self.inner.gain_history.clone()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    fn cost_j1(&self) -> f64 {
        self.inner.cost_j1()
    }

    fn cost_j2(&self) -> f64 {
        self.inner.cost_j2()
    }

    fn final_states(&self) -> Vec<Vec<f64>> {
        self.inner
            .final_states
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Integrate the constant-gain network from the given per-agent states.
#[pyfunction]
fn simulate_constant(
    fem: &Fem,
    topo: &Topology,
    gains: &Gains,
    x0: Vec<Vec<f64>>,
    t_end: f64,
    dt: f64,
) -> PyResult<Trace> {
    let sys =
        network::assemble_closed_loop(&fem.inner, &topo.inner, &gains.inner).map_err(to_py_err)?;
    let trace = sim::simulate_constant(&sys, &states_from(x0), t_end, dt).map_err(to_py_err)?;
    Ok(Trace { inner: trace })
}

/// Integrate the network with the gain adaptation law.
#[pyfunction]
#[pyo3(signature = (fem, topo, x0, gains0, gamma, sigma, t_end, dt))]
#[allow(clippy::too_many_arguments)]
fn simulate_adaptive(
    fem: &Fem,
    topo: &Topology,
    x0: Vec<Vec<f64>>,
    gains0: &Gains,
    gamma: f64,
    sigma: f64,
    t_end: f64,
    dt: f64,
) -> PyResult<Trace> {
    let trace = sim::simulate_adaptive(
        &fem.inner,
        &topo.inner,
        &states_from(x0),
        &gains0.inner,
        gamma,
        sigma,
        t_end,
        dt,
    )
    .map_err(to_py_err)?;
    Ok(Trace { inner: trace })
}

/// Evaluate the trajectory cost on a uniform-gain grid; rows are
/// `(alpha, j2, j1, control_energy)` with unstable points at infinity.
#[pyfunction]
fn sweep_uniform(
    fem: &Fem,
    topo: &Topology,
    x0: Vec<Vec<f64>>,
    grid: Vec<f64>,
    t_end: f64,
    dt: f64,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let (_, report) = designs::design2_optimize(
        &fem.inner,
        &topo.inner,
        &states_from(x0),
        designs::Design2Mode::UniformSweep { grid },
        t_end,
        dt,
    )
    .map_err(to_py_err)?;
    Ok(report.sweep_table.expect("uniform mode tabulates"))
}

/// Gains proportional to the initial pairwise mismatches.
#[pyfunction]
fn static_gains(fem: &Fem, topo: &Topology, x0: Vec<Vec<f64>>) -> PyResult<Gains> {
    let inner =
        designs::static_gains(&fem.inner, &topo.inner, &states_from(x0)).map_err(to_py_err)?;
    Ok(Gains { inner })
}

/// Solve `AᵀP + PA + Q = 0` for stable `A`; returns `(P, residual)`.
#[pyfunction]
fn solve_lyapunov(a: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let sol = mateq::solve_lyapunov(&matrix_from(a)?, &matrix_from(q)?).map_err(to_py_err)?;
    Ok((matrix_to(&sol.p), sol.residual_norm))
}

/// Solve `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` for the stabilizing `P`;
/// returns `(P, residual)`.
#[pyfunction]
fn solve_are(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let sol = mateq::solve_are(
        &matrix_from(a)?,
        &matrix_from(b)?,
        &matrix_from(q)?,
        &matrix_from(r)?,
    )
    .map_err(to_py_err)?;
    Ok((matrix_to(&sol.p), sol.residual_norm))
}

#[pymodule]
fn netsync_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Fem>()?;
    m.add_class::<Topology>()?;
    m.add_class::<Gains>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(simulate_constant, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(static_gains, m)?)?;
    m.add_function(wrap_pyfunction!(solve_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(solve_are, m)?)?;
    Ok(())
}
