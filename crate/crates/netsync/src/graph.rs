//! Communication topology, per-edge coupling gains, the induced graph
//! Laplacian, and the deviation-from-mean operator.
//!
//! Agent labels are 1-based in constructors, reports, and config files;
//! index-based accessors are 0-based.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected connected graph on `N` agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_agents: usize,
    /// Canonical edges, 0-based, `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists, 0-based.
    neighbors: Vec<Vec<usize>>,
    /// All ordered pairs `(i, j)` with `j` a neighbor of `i`, sorted; this is
    /// the canonical storage order for per-edge gains.
    ordered: Vec<(usize, usize)>,
}

impl Topology {
    /// Build from 1-based edge labels. Rejects self-loops, out-of-range and
    /// duplicate edges, and disconnected graphs.
    pub fn new(n_agents: usize, edges_one_based: &[(usize, usize)]) -> Result<Topology> {
        if n_agents == 0 {
            return Err(Error::InvalidInput(
                "topology needs at least one agent".into(),
            ));
        }
        let mut edges = Vec::with_capacity(edges_one_based.len());
        for &(a, b) in edges_one_based {
            if a == 0 || b == 0 || a > n_agents || b > n_agents {
                return Err(Error::InvalidInput(format!(
                    "edge {a}-{b} out of range for {n_agents} agents (labels are 1-based)"
                )));
            }
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop {a}-{b}")));
            }
            let (i, j) = (a.min(b) - 1, a.max(b) - 1);
            edges.push((i, j));
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate edge in topology".into()));
        }

        let mut neighbors = vec![Vec::new(); n_agents];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let topo = Topology {
            n_agents,
            edges,
            ordered: ordered_pairs_from(&neighbors),
            neighbors,
        };
        if !topo.is_connected() {
            return Err(Error::InvalidInput("topology is not connected".into()));
        }
        Ok(topo)
    }

    /// The built-in five-agent benchmark topology.
    pub fn benchmark() -> Topology {
        Topology::new(5, &[(1, 2), (1, 4), (1, 5), (3, 4), (4, 5)])
            .expect("benchmark topology is valid")
    }

    /// All-to-all topology on `n_agents` nodes.
    pub fn all_to_all(n_agents: usize) -> Result<Topology> {
        let mut edges = Vec::new();
        for i in 1..=n_agents {
            for j in (i + 1)..=n_agents {
                edges.push((i, j));
            }
        }
        Topology::new(n_agents, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Canonical 0-based edges, `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges with 1-based labels, for reports and serialization.
    pub fn edges_one_based(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&(i, j)| (i + 1, j + 1)).collect()
    }

    /// 0-based sorted neighbor list of agent `i` (0-based).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Canonical ordered gain pairs, 0-based.
    pub fn ordered_pairs(&self) -> &[(usize, usize)] {
        &self.ordered
    }

    /// Position of ordered pair `(i, j)` (0-based) in the canonical order.
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        self.ordered.binary_search(&(i, j)).ok()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_agents];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n_agents
    }
}

fn ordered_pairs_from(neighbors: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, list) in neighbors.iter().enumerate() {
        for &j in list {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Per-ordered-pair coupling gains `α_ij`, stored in the topology's
/// canonical pair order. Directed values are allowed (agent `i`'s gain
/// toward `j` need not equal `j`'s toward `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGains {
    topo: Topology,
    values: Vec<f64>,
}

impl EdgeGains {
    /// Uniform nonnegative gain on every ordered pair.
    pub fn uniform(topo: &Topology, alpha: f64) -> Result<EdgeGains> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gain must be nonnegative and finite, got {alpha}"
            )));
        }
        Ok(EdgeGains {
            topo: topo.clone(),
            values: vec![alpha; topo.ordered_pairs().len()],
        })
    }

    /// All gains zero (uncoupled baseline).
    pub fn zeros(topo: &Topology) -> EdgeGains {
        EdgeGains {
            topo: topo.clone(),
            values: vec![0.0; topo.ordered_pairs().len()],
        }
    }

    /// Build from explicit 1-based ordered-pair assignments. Every ordered
    /// pair of the topology must be covered exactly once and nonnegative.
    pub fn from_pairs(topo: &Topology, pairs: &[((usize, usize), f64)]) -> Result<EdgeGains> {
        let mut values = vec![f64::NAN; topo.ordered_pairs().len()];
        for &((a, b), v) in pairs {
            if a == 0 || b == 0 {
                return Err(Error::InvalidInput("agent labels are 1-based".into()));
            }
            let idx = topo.pair_index(a - 1, b - 1).ok_or_else(|| {
                Error::InvalidInput(format!("({a}, {b}) is not an edge of the topology"))
            })?;
            if !values[idx].is_nan() {
                return Err(Error::InvalidInput(format!(
                    "duplicate gain for ({a}, {b})"
                )));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "gain for ({a}, {b}) must be nonnegative and finite, got {v}"
                )));
            }
            values[idx] = v;
        }
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            let (i, j) = topo.ordered_pairs()[k];
            return Err(Error::InvalidInput(format!(
                "missing gain for ordered pair ({}, {})",
                i + 1,
                j + 1
            )));
        }
        Ok(EdgeGains {
            topo: topo.clone(),
            values,
        })
    }

    /// Build from raw values in canonical pair order without the
    /// nonnegativity check. The adaptation law drives gains through
    /// transiently negative values, so integrated trajectories cannot use
    /// the validating constructors.
    pub fn unchecked(topo: &Topology, values: Vec<f64>) -> Result<EdgeGains> {
        if values.len() != topo.ordered_pairs().len() {
            return Err(Error::Dimension(format!(
                "{} gain values for {} ordered pairs",
                values.len(),
                topo.ordered_pairs().len()
            )));
        }
        Ok(EdgeGains {
            topo: topo.clone(),
            values,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    /// Values in canonical pair order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Gain for the 0-based ordered pair `(i, j)`, if it is an edge.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.topo.pair_index(i, j).map(|k| self.values[k])
    }

    /// Sum of agent `i`'s outgoing gains, the weighted degree `Σ_j α_ij`.
    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.topo
            .neighbors(i)
            .iter()
            .map(|&j| self.values[self.topo.pair_index(i, j).unwrap()])
            .sum()
    }

    /// Iterate `((i, j), α_ij)` over 0-based ordered pairs in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.topo
            .ordered_pairs()
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

/// Graph Laplacian induced by a topology and gains: `L_ij = -α_ij` on edges,
/// `L_ii = Σ_j α_ij`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    entries: DMatrix<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_agents(&self) -> usize {
        self.entries.nrows()
    }
}

/// Assemble the Laplacian from gains. Row sums are zero by construction.
pub fn laplacian_from_gains(topo: &Topology, gains: &EdgeGains) -> Result<Laplacian> {
    if gains.topology() != topo {
        return Err(Error::Dimension(
            "gains were built for a different topology".into(),
        ));
    }
    let n = topo.n_agents();
    let mut entries = DMatrix::zeros(n, n);
    for ((i, j), v) in gains.iter() {
        entries[(i, j)] = -v;
    }
    for i in 0..n {
        entries[(i, i)] = gains.weighted_degree(i);
    }
    Ok(Laplacian { entries })
}

/// The centering operator `C₁ = I - (1/N) 𝟙𝟙ᵀ`: symmetric, idempotent, and
/// `N·C₁` is the all-to-all Laplacian.
pub fn deviation_operator(n_agents: usize) -> Result<DMatrix<f64>> {
    if n_agents == 0 {
        return Err(Error::InvalidInput("need at least one agent".into()));
    }
    let n = n_agents as f64;
    Ok(DMatrix::from_fn(n_agents, n_agents, |i, j| {
        if i == j {
            1.0 - 1.0 / n
        } else {
            -1.0 / n
        }
    }))
}

/// Project an arbitrary square matrix onto the admissible Laplacian set for
/// `topo`: non-edge off-diagonals are zeroed, edge entries are clipped to be
/// nonpositive, and the diagonal is reset to the negative row sum.
pub fn project_to_theta(m: &DMatrix<f64>, topo: &Topology) -> Result<Laplacian> {
    let n = topo.n_agents();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{}x{} matrix for a topology with {} agents",
            m.nrows(),
            m.ncols(),
            n
        )));
    }
    let mut entries = DMatrix::zeros(n, n);
    for &(i, j) in topo.ordered_pairs() {
        entries[(i, j)] = m[(i, j)].min(0.0);
    }
    for i in 0..n {
        let row_sum: f64 = topo.neighbors(i).iter().map(|&j| entries[(i, j)]).sum();
        entries[(i, i)] = -row_sum;
    }
    Ok(Laplacian { entries })
}
