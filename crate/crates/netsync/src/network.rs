//! Aggregate N-agent assembly: block state matrices for the constant-gain
//! closed loop, the augmented-input open loop, the aggregate cost weight,
//! and evaluation of the per-agent control signals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{FemModel, SpatialField};
use crate::graph::{deviation_operator, EdgeGains, Laplacian, Topology};

/// Block matrices of the coupled N-agent system at fixed gains.
#[derive(Debug, Clone)]
pub struct AggregateSystem {
    pub fem: FemModel,
    pub topo: Topology,
    pub gains: EdgeGains,
    /// Closed-loop state matrix: diagonal blocks
    /// `A_c - (Σ_j α_ij)·b2·f_vecᵀ`, off-diagonal blocks `+α_ij·b2·f_vecᵀ`
    /// on edges.
    pub a_cl: DMatrix<f64>,
    /// Block-diagonal input map; column `i` carries `b2` in agent `i`'s rows.
    pub b_agg: DMatrix<f64>,
    /// Aggregate cost weight `(I + C₁ᵀC₁) ⊗ mass`, the discrete form of
    /// `|X|² + |Z|²` in the FEM inner product.
    pub q_weight: DMatrix<f64>,
}

impl AggregateSystem {
    pub fn n_agents(&self) -> usize {
        self.topo.n_agents()
    }

    pub fn state_dim(&self) -> usize {
        self.topo.n_agents() * self.fem.n
    }
}

/// Assemble the constant-gain closed loop for the given topology and gains.
pub fn assemble_closed_loop(
    fem: &FemModel,
    topo: &Topology,
    gains: &EdgeGains,
) -> Result<AggregateSystem> {
    if gains.topology() != topo {
        return Err(Error::Dimension(
            "gains were built for a different topology".into(),
        ));
    }
    let n = fem.n;
    let n_agents = topo.n_agents();
    let dim = n_agents * n;

    let a_c = fem.a_closed();
    let bf = fem.b2() * fem.f_vec.transpose();

    let mut a_cl = DMatrix::zeros(dim, dim);
    for i in 0..n_agents {
        let diag = &a_c - &bf * gains.weighted_degree(i);
        a_cl.view_mut((i * n, i * n), (n, n)).copy_from(&diag);
        for &j in topo.neighbors(i) {
            let alpha = gains.get(i, j).unwrap();
            a_cl.view_mut((i * n, j * n), (n, n))
                .copy_from(&(&bf * alpha));
        }
    }

    Ok(AggregateSystem {
        fem: fem.clone(),
        topo: topo.clone(),
        gains: gains.clone(),
        a_cl,
        b_agg: aggregate_input(fem, n_agents),
        q_weight: aggregate_weight(fem, n_agents)?,
    })
}

/// Block-diagonal aggregate input map (N·n) × N.
pub fn aggregate_input(fem: &FemModel, n_agents: usize) -> DMatrix<f64> {
    let n = fem.n;
    let mut b_agg = DMatrix::zeros(n_agents * n, n_agents);
    for i in 0..n_agents {
        b_agg.view_mut((i * n, i), (n, 1)).copy_from(fem.b2());
    }
    b_agg
}

/// Aggregate cost weight `(I + C₁ᵀC₁) ⊗ mass`.
pub fn aggregate_weight(fem: &FemModel, n_agents: usize) -> Result<DMatrix<f64>> {
    let c1 = deviation_operator(n_agents)?;
    let w = DMatrix::identity(n_agents, n_agents) + c1.transpose() * &c1;
    Ok(w.kronecker(&fem.mass))
}

/// Scalar control applied by agent `i` (0-based):
/// `u_i = -k_vecᵀ q_i - Σ_{j∈N_i} α_ij f_vecᵀ (q_i - q_j)`.
pub fn control_signal(
    fem: &FemModel,
    topo: &Topology,
    gains: &EdgeGains,
    states: &[SpatialField],
    i: usize,
) -> Result<f64> {
    if gains.topology() != topo {
        return Err(Error::Dimension(
            "gains were built for a different topology".into(),
        ));
    }
    if states.len() != topo.n_agents() {
        return Err(Error::Dimension(format!(
            "{} states for {} agents",
            states.len(),
            topo.n_agents()
        )));
    }
    if i >= topo.n_agents() {
        return Err(Error::InvalidInput(format!(
            "agent index {i} out of range (0-based, {} agents)",
            topo.n_agents()
        )));
    }
    for s in states {
        if s.len() != fem.n {
            return Err(Error::Dimension(format!(
                "state of length {} for a model with n = {}",
                s.len(),
                fem.n
            )));
        }
    }
    let mut u = -fem.k_vec.dot(&states[i]);
    for &j in topo.neighbors(i) {
        let alpha = gains.get(i, j).unwrap();
        u -= alpha * fem.f_vec.dot(&(&states[i] - &states[j]));
    }
    Ok(u)
}

/// Augmented-input aggregate system: block-diagonal open loop `I_N ⊗ A` and
/// the widened input map `b_tilde = [b_agg, b_agg·L]` of shape (N·n) × 2N.
pub fn assemble_augmented(
    fem: &FemModel,
    topo: &Topology,
    lap: &Laplacian,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_agents = topo.n_agents();
    if lap.n_agents() != n_agents {
        return Err(Error::Dimension(format!(
            "{}-agent Laplacian for a topology with {} agents",
            lap.n_agents(),
            n_agents
        )));
    }
    let n = fem.n;
    let dim = n_agents * n;

    let mut a_open = DMatrix::zeros(dim, dim);
    for i in 0..n_agents {
        a_open
            .view_mut((i * n, i * n), (n, n))
            .copy_from(fem.open_loop());
    }

    let b_agg = aggregate_input(fem, n_agents);
    let mut b_tilde = DMatrix::zeros(dim, 2 * n_agents);
    b_tilde.view_mut((0, 0), (dim, n_agents)).copy_from(&b_agg);
    b_tilde
        .view_mut((0, n_agents), (dim, n_agents))
        .copy_from(&(&b_agg * lap.matrix()));

    Ok((a_open, b_tilde))
}

/// The structured feedback on the augmented input that reproduces the
/// per-agent law `u_i = -k_vecᵀ q_i - Σ_j α_ij f_vecᵀ (q_i - q_j)`:
/// rows `[I ⊗ k_vecᵀ; I ⊗ f_vecᵀ]`, applied as `Ũ = -gain · Q`.
pub fn structured_feedback(fem: &FemModel, n_agents: usize) -> DMatrix<f64> {
    let n = fem.n;
    let mut gain = DMatrix::zeros(2 * n_agents, n_agents * n);
    for i in 0..n_agents {
        gain.view_mut((i, i * n), (1, n))
            .copy_from(&fem.k_vec.transpose());
        gain.view_mut((n_agents + i, i * n), (1, n))
            .copy_from(&fem.f_vec.transpose());
    }
    gain
}

/// Stack per-agent fields into one aggregate coefficient vector.
pub fn stack_states(fem: &FemModel, states: &[SpatialField]) -> Result<DVector<f64>> {
    let n = fem.n;
    for s in states {
        if s.len() != n {
            return Err(Error::Dimension(format!(
                "state of length {} for a model with n = {}",
                s.len(),
                n
            )));
        }
    }
    let mut q = DVector::zeros(states.len() * n);
    for (i, s) in states.iter().enumerate() {
        q.rows_mut(i * n, n).copy_from(s);
    }
    Ok(q)
}
