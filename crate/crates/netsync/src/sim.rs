//! Fixed-step RK4 integration of the constant-gain and adaptive-gain closed
//! loops, per-step scalar metrics, and trajectory cost functionals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{FemModel, SpatialField};
use crate::graph::{EdgeGains, Topology};
use crate::network::{assemble_closed_loop, AggregateSystem};

/// The classical RK4 method is stable on the negative real axis only for
/// `dt·|λ|` below this bound; step sizes are halved until every closed-loop
/// eigenvalue satisfies it.
const RK4_REAL_STABILITY: f64 = 2.78;

/// Snapshot of the co-integrated adaptive system at one instant.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    pub states: Vec<SpatialField>,
    pub gains: EdgeGains,
    pub t: f64,
}

/// Time series of states' scalar metrics along one simulation.
///
/// `w_value` is `|X|² + (1/γ)·Σ α_ij²` with the gain term weighted by the
/// adaptation rate (γ = 1 for constant-gain runs); this weighting is the
/// quantity the adaptation law drives monotonically downward.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub x_norm: Vec<f64>,
    pub z_norm: Vec<f64>,
    pub w_value: Vec<f64>,
    /// Per-step control signals, `controls[step][agent]`.
    pub controls: Vec<Vec<f64>>,
    /// Per-step gain values in canonical pair order; empty for
    /// constant-gain runs.
    pub gain_history: Vec<Vec<f64>>,
    /// Running trapezoidal integral of `|X|² + |Z|²`.
    pub j1_running: Vec<f64>,
    /// Running trapezoidal integral of `|X|² + |Z|² + Σ u_i²`.
    pub j2_running: Vec<f64>,
    /// Final per-agent states.
    pub final_states: Vec<SpatialField>,
    /// Step size actually used after stability halving.
    pub dt: f64,
    /// Number of times the requested step size was halved.
    pub halvings: u32,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn cost_j1(&self) -> f64 {
        *self.j1_running.last().unwrap_or(&0.0)
    }

    pub fn cost_j2(&self) -> f64 {
        *self.j2_running.last().unwrap_or(&0.0)
    }
}

/// Accumulated state-plus-deviation cost `∫ |X|² + |Z|² dτ` over the trace.
pub fn cost_j1(trace: &SimTrace) -> f64 {
    trace.cost_j1()
}

/// Accumulated cost with control energy, `∫ |X|² + |Z|² + Σ u_i² dτ`.
pub fn cost_j2(trace: &SimTrace) -> f64 {
    trace.cost_j2()
}

fn rk4_step<F: Fn(&DVector<f64>) -> DVector<f64>>(
    f: &F,
    y: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (dt / 2.0)));
    let k3 = f(&(y + &k2 * (dt / 2.0)));
    let k4 = f(&(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Halve `dt` until the spectrum of `a` fits inside the RK4 stability
/// interval. Returns the effective step and the number of halvings.
///
/// If the eigenvalue iteration stalls, the two-norm (an upper bound on the
/// spectral radius) takes over: a smaller step than strictly needed is the
/// safe direction.
pub(crate) fn effective_dt(a: &DMatrix<f64>, dt: f64) -> Result<(f64, u32)> {
    let rho = match crate::mateq::spectrum(a) {
        Ok(eigs) => eigs.iter().map(|e| e.norm()).fold(0.0, f64::max),
        Err(_) => two_norm_bound(a),
    };
    let mut dt_eff = dt;
    let mut halvings = 0u32;
    while rho * dt_eff > RK4_REAL_STABILITY {
        dt_eff /= 2.0;
        halvings += 1;
        if halvings > 60 {
            return Err(Error::InvalidInput(format!(
                "step size cannot be stabilized (spectral radius {rho:.3e})"
            )));
        }
    }
    Ok((dt_eff, halvings))
}

/// Ceiling on the RK4 steps of one run. Each recorded step costs on the
/// order of a hundred bytes of metrics, so the cap keeps a run's memory
/// under about a gigabyte. Stiff loops land here when the stability
/// halvings shrink the step far below the requested one.
pub(crate) const MAX_SIM_STEPS: usize = 5_000_000;

/// Number of RK4 steps covering `t_end` at the stabilized step `dt_eff`,
/// refused beyond [`MAX_SIM_STEPS`].
pub(crate) fn step_count(t_end: f64, dt_eff: f64) -> Result<usize> {
    let steps = (t_end / dt_eff).round().max(1.0);
    if steps > MAX_SIM_STEPS as f64 {
        return Err(Error::InvalidInput(format!(
            "horizon {t_end} needs {steps:.2e} steps of {dt_eff:.3e} after stability \
             halvings (limit {MAX_SIM_STEPS}); shorten the horizon or shrink the gains"
        )));
    }
    Ok(steps as usize)
}

/// `‖a‖₂ = σ_max(a) ≥ ρ(a)`, computed from the symmetric eigenproblem of
/// `aᵀa`, which cannot stall.
fn two_norm_bound(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    gram.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(0.0)
        .sqrt()
}

fn validate_run(
    fem: &FemModel,
    topo: &Topology,
    x0: &[SpatialField],
    t_end: f64,
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(t_end >= dt) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "t_end must be at least dt, got t_end = {t_end}, dt = {dt}"
        )));
    }
    if x0.len() != topo.n_agents() {
        return Err(Error::Dimension(format!(
            "{} initial states for {} agents",
            x0.len(),
            topo.n_agents()
        )));
    }
    for s in x0 {
        if s.len() != fem.n {
            return Err(Error::Dimension(format!(
                "initial state of length {} for a model with n = {}",
                s.len(),
                fem.n
            )));
        }
    }
    Ok(())
}

/// Per-step metric collector shared by the two integrators.
struct Recorder<'a> {
    fem: &'a FemModel,
    topo: &'a Topology,
    n: usize,
    n_agents: usize,
    /// Weight on the squared-gain term of `w_value` (1/γ for adaptive runs).
    gain_weight: f64,
    trace: SimTrace,
    prev_g1: f64,
    prev_g2: f64,
}

impl<'a> Recorder<'a> {
    fn new(
        fem: &'a FemModel,
        topo: &'a Topology,
        gain_weight: f64,
        dt: f64,
        halvings: u32,
        capacity: usize,
        record_gains: bool,
    ) -> Self {
        let mut trace = SimTrace {
            times: Vec::with_capacity(capacity),
            x_norm: Vec::with_capacity(capacity),
            z_norm: Vec::with_capacity(capacity),
            w_value: Vec::with_capacity(capacity),
            controls: Vec::with_capacity(capacity),
            gain_history: Vec::new(),
            j1_running: Vec::with_capacity(capacity),
            j2_running: Vec::with_capacity(capacity),
            final_states: Vec::new(),
            dt,
            halvings,
        };
        if record_gains {
            trace.gain_history = Vec::with_capacity(capacity);
        }
        Recorder {
            fem,
            topo,
            n: fem.n,
            n_agents: topo.n_agents(),
            gain_weight,
            trace,
            prev_g1: 0.0,
            prev_g2: 0.0,
        }
    }

    /// Record metrics at time `t` for stacked states `q` and current gain
    /// values `alpha` (canonical pair order).
    fn record(
        &mut self,
        t: f64,
        q: &DVector<f64>,
        alpha: &[f64],
        record_gains: bool,
    ) -> Result<()> {
        let n = self.n;
        let mut x2 = 0.0;
        let mut mean = DVector::zeros(n);
        for i in 0..self.n_agents {
            let qi = q.rows(i * n, n);
            x2 += (self.fem.mass.clone() * qi).dot(&qi.clone_owned());
            mean += qi;
        }
        mean /= self.n_agents as f64;
        let mut z2 = 0.0;
        for i in 0..self.n_agents {
            let zi = q.rows(i * n, n).clone_owned() - &mean;
            z2 += (&self.fem.mass * &zi).dot(&zi);
        }
        if !x2.is_finite() || !z2.is_finite() {
            return Err(Error::Instability {
                t,
                msg: "state norm is not finite".into(),
            });
        }

        let mut controls = Vec::with_capacity(self.n_agents);
        let mut u2_sum = 0.0;
        // b_vecᵀ q_i once per agent; both gain functionals are multiples of
        // the same load vector.
        let bq: Vec<f64> = (0..self.n_agents)
            .map(|i| self.fem.b_vec.dot(&q.rows(i * n, n).clone_owned()))
            .collect();
        for i in 0..self.n_agents {
            let mut u = -self.fem.c_k * bq[i];
            for &j in self.topo.neighbors(i) {
                let k = self.topo.pair_index(i, j).unwrap();
                u -= alpha[k] * self.fem.c_f * (bq[i] - bq[j]);
            }
            u2_sum += u * u;
            controls.push(u);
        }

        let alpha2: f64 = alpha.iter().map(|a| a * a).sum();
        let g1 = x2 + z2;
        let g2 = g1 + u2_sum;

        let tr = &mut self.trace;
        if tr.times.is_empty() {
            tr.j1_running.push(0.0);
            tr.j2_running.push(0.0);
        } else {
            let dt = tr.dt;
            let j1 = tr.j1_running.last().unwrap() + dt / 2.0 * (self.prev_g1 + g1);
            let j2 = tr.j2_running.last().unwrap() + dt / 2.0 * (self.prev_g2 + g2);
            tr.j1_running.push(j1);
            tr.j2_running.push(j2);
        }
        self.prev_g1 = g1;
        self.prev_g2 = g2;

        tr.times.push(t);
        tr.x_norm.push(x2.max(0.0).sqrt());
        tr.z_norm.push(z2.max(0.0).sqrt());
        tr.w_value.push(x2 + self.gain_weight * alpha2);
        tr.controls.push(controls);
        if record_gains {
            tr.gain_history.push(alpha.to_vec());
        }
        Ok(())
    }

    fn finish(mut self, q: &DVector<f64>) -> SimTrace {
        let n = self.n;
        self.trace.final_states = (0..self.n_agents)
            .map(|i| q.rows(i * n, n).clone_owned())
            .collect();
        self.trace
    }
}

/// Integrate the constant-gain closed loop `Q̇ = a_cl·Q` and record metrics
/// at every step.
pub fn simulate_constant(
    sys: &AggregateSystem,
    x0: &[SpatialField],
    t_end: f64,
    dt: f64,
) -> Result<SimTrace> {
    validate_run(&sys.fem, &sys.topo, x0, t_end, dt)?;
    let (dt_eff, halvings) = effective_dt(&sys.a_cl, dt)?;
    let n_steps = step_count(t_end, dt_eff)?;

    let mut q = crate::network::stack_states(&sys.fem, x0)?;
    let alpha: Vec<f64> = sys.gains.values().to_vec();
    let mut rec = Recorder::new(
        &sys.fem,
        &sys.topo,
        1.0,
        dt_eff,
        halvings,
        n_steps + 1,
        false,
    );
    rec.record(0.0, &q, &alpha, false)?;

    let rhs = |y: &DVector<f64>| &sys.a_cl * y;
    for step in 1..=n_steps {
        q = rk4_step(&rhs, &q, dt_eff);
        rec.record(step as f64 * dt_eff, &q, &alpha, false)?;
    }
    Ok(rec.finish(&q))
}

/// Co-integrate states and gains:
/// `q̇_i = A q_i + b2·u_i` with `u_i = -k_vecᵀ q_i - Σ_j α_ij f_vecᵀ(q_i - q_j)`
/// and `α̇_ij = γ·[(b_vecᵀ q_i)·(f_vecᵀ(q_i - q_j)) - σ·α_ij]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_adaptive(
    fem: &FemModel,
    topo: &Topology,
    x0: &[SpatialField],
    gains0: &EdgeGains,
    gamma: f64,
    sigma: f64,
    t_end: f64,
    dt: f64,
) -> Result<SimTrace> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    validate_run(fem, topo, x0, t_end, dt)?;
    if gains0.topology() != topo {
        return Err(Error::Dimension(
            "initial gains were built for a different topology".into(),
        ));
    }

    // Stability is assessed on the closed loop at the initial gains; the
    // leakage keeps adapted gains of the same magnitude on benchmark runs.
    let sys0 = assemble_closed_loop(fem, topo, gains0)?;
    let (dt_eff, halvings) = effective_dt(&sys0.a_cl, dt)?;
    let n_steps = step_count(t_end, dt_eff)?;

    let n = fem.n;
    let n_agents = topo.n_agents();
    let dim = n_agents * n;
    let pairs: Vec<(usize, usize)> = topo.ordered_pairs().to_vec();
    let n_edges = pairs.len();

    let mut y = DVector::zeros(dim + n_edges);
    y.rows_mut(0, dim)
        .copy_from(&crate::network::stack_states(fem, x0)?);
    for (k, v) in gains0.values().iter().enumerate() {
        y[dim + k] = *v;
    }

    let a_open = fem.open_loop().clone();
    let b2 = fem.b2().clone();
    let neighbors: Vec<Vec<(usize, usize)>> = (0..n_agents)
        .map(|i| {
            topo.neighbors(i)
                .iter()
                .map(|&j| (j, topo.pair_index(i, j).unwrap()))
                .collect()
        })
        .collect();
    let c_f = fem.c_f;
    let c_k = fem.c_k;
    let b_vec = fem.b_vec.clone();

    let rhs = |y: &DVector<f64>| {
        let mut dy = DVector::zeros(dim + n_edges);
        let bq: Vec<f64> = (0..n_agents)
            .map(|i| b_vec.dot(&y.rows(i * n, n).clone_owned()))
            .collect();
        for i in 0..n_agents {
            let qi = y.rows(i * n, n);
            let mut u = -c_k * bq[i];
            for &(j, k) in &neighbors[i] {
                u -= y[dim + k] * c_f * (bq[i] - bq[j]);
            }
            let dqi = &a_open * qi + &b2 * u;
            dy.rows_mut(i * n, n).copy_from(&dqi);
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            dy[dim + k] = gamma * (bq[i] * (c_f * (bq[i] - bq[j])) - sigma * y[dim + k]);
        }
        dy
    };

    let mut rec = Recorder::new(fem, topo, 1.0 / gamma, dt_eff, halvings, n_steps + 1, true);
    let alpha_of = |y: &DVector<f64>| y.rows(dim, n_edges).iter().copied().collect::<Vec<f64>>();
    rec.record(0.0, &y.rows(0, dim).clone_owned(), &alpha_of(&y), true)?;

    for step in 1..=n_steps {
        y = rk4_step(&rhs, &y, dt_eff);
        rec.record(
            step as f64 * dt_eff,
            &y.rows(0, dim).clone_owned(),
            &alpha_of(&y),
            true,
        )?;
    }
    Ok(rec.finish(&y.rows(0, dim).clone_owned()))
}

/// Under all-to-all coupling with uniform gain α, every pairwise difference
/// obeys the reduced equation `ḋ = (A_c - α·N·b2·f_vecᵀ)·d`. Simulates the
/// full aggregate loop and the reduced equation for the first agent pair and
/// returns the largest mass-norm discrepancy over the trajectory.
pub fn pairwise_difference_check(
    fem: &FemModel,
    n_agents: usize,
    alpha: f64,
    x0: &[SpatialField],
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    if n_agents < 2 {
        return Err(Error::InvalidInput(
            "pairwise check needs at least two agents".into(),
        ));
    }
    let topo = Topology::all_to_all(n_agents)?;
    let gains = EdgeGains::uniform(&topo, alpha)?;
    let sys = assemble_closed_loop(fem, &topo, &gains)?;
    validate_run(fem, &topo, x0, t_end, dt)?;

    let (dt_eff, _) = effective_dt(&sys.a_cl, dt)?;
    let n_steps = step_count(t_end, dt_eff)?;
    let n = fem.n;

    let mut q = crate::network::stack_states(fem, x0)?;
    let a_red = fem.a_closed() - fem.b2() * fem.f_vec.transpose() * (alpha * n_agents as f64);
    let mut d_red: DVector<f64> = &x0[0] - &x0[1];

    let full_rhs = |y: &DVector<f64>| &sys.a_cl * y;
    let red_rhs = |y: &DVector<f64>| &a_red * y;

    let mut max_dev = 0.0f64;
    for _ in 0..n_steps {
        q = rk4_step(&full_rhs, &q, dt_eff);
        d_red = rk4_step(&red_rhs, &d_red, dt_eff);
        let d_full = q.rows(0, n).clone_owned() - q.rows(n, n).clone_owned();
        let diff = &d_full - &d_red;
        let dev = (&fem.mass * &diff).dot(&diff).max(0.0).sqrt();
        if !dev.is_finite() {
            return Err(Error::Instability {
                t: n_steps as f64 * dt_eff,
                msg: "pairwise difference diverged".into(),
            });
        }
        max_dev = max_dev.max(dev);
    }
    Ok(max_dev)
}
