//! Gain-design procedures: Lyapunov-trace minimization over the gain space
//! (Design I), trajectory-cost minimization by uniform-gain sweep or
//! per-edge search (Design II), LQR on the augmented-input aggregate system
//! (Design III), and the mismatch-proportional static fallback.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{l2_norm, FemModel, SpatialField};
use crate::graph::{laplacian_from_gains, EdgeGains, Laplacian, Topology};
use crate::mateq::{solve_are, solve_lyapunov};
use crate::network::{aggregate_weight, assemble_augmented, assemble_closed_loop, stack_states};
use crate::sim::simulate_constant;

/// Outcome of one design procedure: the gains or Laplacian it chose and the
/// cost/diagnostic values it computed along the way.
#[derive(Debug, Clone)]
pub struct CostReport {
    pub design_id: String,
    pub gains: Option<EdgeGains>,
    pub laplacian: Option<DMatrix<f64>>,
    /// State-plus-deviation cost of a verification run, when one was made.
    pub j1: Option<f64>,
    /// Cost with control energy of a verification run, when one was made.
    pub j2: Option<f64>,
    /// Augmented-input cost (Design III verification).
    pub j3: Option<f64>,
    /// Lyapunov certificate value `trace(Π)` (Design I).
    pub trace_pi: Option<f64>,
    /// Residual norm of the last matrix-equation solve.
    pub residual: Option<f64>,
    /// Certificate matrix of the last solve (Lyapunov Π or Riccati P).
    pub pi: Option<DMatrix<f64>>,
    /// Sweep rows `(alpha, j2, j1, control_energy)` (Design II uniform mode).
    pub sweep_table: Option<Vec<(f64, f64, f64, f64)>>,
    pub wall_time: Duration,
}

impl CostReport {
    fn new(design_id: &str) -> CostReport {
        CostReport {
            design_id: design_id.to_string(),
            gains: None,
            laplacian: None,
            j1: None,
            j2: None,
            j3: None,
            trace_pi: None,
            residual: None,
            pi: None,
            sweep_table: None,
            wall_time: Duration::ZERO,
        }
    }
}

/// How Design II searches the gain space.
#[derive(Debug, Clone)]
pub enum Design2Mode {
    /// Evaluate the trajectory cost on a uniform-gain grid and keep the
    /// argmin.
    UniformSweep { grid: Vec<f64> },
    /// Nelder–Mead over per-edge gains.
    MultiGain,
}

/// `trace(Π)` of the closed-loop Lyapunov solution at the given gains, with
/// the Frobenius norm of the solve residual.
///
/// A symmetric coupling Laplacian decouples in its orthonormal eigenbasis:
/// rotating the aggregate loop by `Vᵀ⊗I` leaves independent blocks
/// `A_c − λ_i · b2 f_vecᵀ`, and the trace only touches the diagonal blocks
/// of the rotated weight, `(1 + |C₁v_i|²) · M`. That replaces one solve in
/// dimension `N·n` with `N` solves in dimension `n`, and it sidesteps the
/// Schur stalls that the full matrix provokes when the modes nearly
/// coincide. The reported residual is then the norm of the block-diagonal
/// part of the rotated equation, the part the trace depends on, which the
/// rotation leaves unchanged. Asymmetric gains do not diagonalize this way
/// and take the full-size solve instead.
fn closed_loop_trace(
    fem: &FemModel,
    topo: &Topology,
    q_weight: &DMatrix<f64>,
    gains: &EdgeGains,
) -> Result<(f64, f64)> {
    let lap = laplacian_from_gains(topo, gains)?;
    let l = lap.matrix();
    if (l - l.transpose()).amax() > 1e-12 * l.amax().max(1.0) {
        let sys = assemble_closed_loop(fem, topo, gains)?;
        let sol = solve_lyapunov(&sys.a_cl, q_weight)?;
        return Ok((sol.p.trace(), sol.residual_norm));
    }
    let eig = nalgebra::SymmetricEigen::new(l.clone());
    let a_c = fem.a_closed();
    let bf = fem.b2() * fem.f_vec.transpose();
    let n_agents = topo.n_agents() as f64;
    let mut total = 0.0;
    let mut residual_sq = 0.0;
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        // C₁ removes the mean, so |C₁v|² = |v|² − N · mean(v)².
        let mean = v.sum() / n_agents;
        let weight = 1.0 + (v.norm_squared() - n_agents * mean * mean).max(0.0);
        let a_mode = &a_c - &bf * *lambda;
        let sol = solve_lyapunov(&a_mode, &(&fem.mass * weight))?;
        total += sol.p.trace();
        residual_sq += sol.residual_norm * sol.residual_norm;
    }
    Ok((total, residual_sq.sqrt()))
}

/// Upper edge of Design I's search box. The trace objective carries no
/// control-energy penalty, so on this plant it keeps improving, ever more
/// slowly, as the gains grow; an unboxed search drifts to gains whose
/// closed loop no integrator can afford. The cap sits an order of magnitude
/// above the gains every other procedure produces, past the point where
/// further growth changes the trace in the fourth decimal.
pub const DESIGN1_GAIN_CAP: f64 = 50.0;

/// Design I: minimize `trace(Π)` where Π solves the closed-loop Lyapunov
/// equation with the aggregate cost weight. Derivative-free search over the
/// gain vector, projected into the box `[0, DESIGN1_GAIN_CAP]`; restarts
/// from the given initial gains, all-zero, and all-one seeds. `symmetric`
/// halves the search space by enforcing `α_ij = α_ji`. The initial gains
/// are kept verbatim (even outside the box) when nothing beats them.
pub fn design1_optimize(
    fem: &FemModel,
    topo: &Topology,
    symmetric: bool,
    init: &EdgeGains,
) -> Result<(EdgeGains, CostReport)> {
    let start = Instant::now();
    if init.topology() != topo {
        return Err(Error::Dimension(
            "initial gains were built for a different topology".into(),
        ));
    }
    let q_weight = aggregate_weight(fem, topo.n_agents())?;

    let (init_trace, _) = closed_loop_trace(fem, topo, &q_weight, init).map_err(|e| match e {
        Error::NotHurwitz { re, .. } => Error::InfeasibleStart(format!(
            "closed loop is unstable at the initial gains (abscissa {re:.3e}); try smaller gains"
        )),
        other => other,
    })?;

    let n_vars = if symmetric {
        topo.edges().len()
    } else {
        topo.ordered_pairs().len()
    };
    if n_vars == 0 {
        let mut report = CostReport::new("design1");
        let (tr, res) = closed_loop_trace(fem, topo, &q_weight, init)?;
        report.gains = Some(init.clone());
        report.trace_pi = Some(tr);
        report.residual = Some(res);
        report.wall_time = start.elapsed();
        return Ok((init.clone(), report));
    }

    let into_box = |vars: &[f64]| -> Vec<f64> {
        vars.iter()
            .map(|v| v.clamp(0.0, DESIGN1_GAIN_CAP))
            .collect()
    };
    let objective = |vars: &[f64]| -> f64 {
        let gains = expand_gains(topo, symmetric, &into_box(vars));
        match closed_loop_trace(fem, topo, &q_weight, &gains) {
            Ok((tr, _)) => tr,
            Err(_) => f64::INFINITY,
        }
    };

    let seeds: Vec<Vec<f64>> = vec![
        compress_gains(topo, symmetric, init),
        vec![0.0; n_vars],
        vec![1.0; n_vars],
    ];
    let mut best_vars = into_box(&seeds[0]);
    let mut best_f = f64::INFINITY;
    for seed in &seeds {
        let (vars, f) = nelder_mead(&objective, seed, 200 * n_vars);
        if f < best_f {
            best_f = f;
            best_vars = into_box(&vars);
        }
    }
    // The incumbent never loses to its own seed.
    if init_trace < best_f {
        best_f = init_trace;
        best_vars = compress_gains(topo, symmetric, init);
    }

    let gains = expand_gains(topo, symmetric, &best_vars);
    let (trace_pi, residual) = closed_loop_trace(fem, topo, &q_weight, &gains)?;
    debug_assert!(trace_pi <= best_f + 1e-9 * best_f.abs());

    let mut report = CostReport::new("design1");
    report.gains = Some(gains.clone());
    report.trace_pi = Some(trace_pi);
    report.residual = Some(residual);
    report.wall_time = start.elapsed();
    Ok((gains, report))
}

/// Design II: minimize the simulated trajectory cost (state, deviation, and
/// control energy) over the gains, either on a uniform-α grid or by
/// per-edge search seeded from the static fallback, zeros, and ones.
pub fn design2_optimize(
    fem: &FemModel,
    topo: &Topology,
    x0: &[SpatialField],
    mode: Design2Mode,
    t_end: f64,
    dt: f64,
) -> Result<(EdgeGains, CostReport)> {
    let start = Instant::now();
    match mode {
        Design2Mode::UniformSweep { grid } => {
            if grid.is_empty() {
                return Err(Error::InvalidInput("sweep grid is empty".into()));
            }
            for &alpha in &grid {
                if !(alpha >= 0.0) || !alpha.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "sweep grid values must be nonnegative, got {alpha}"
                    )));
                }
            }
            let rows: Vec<(f64, f64, f64, f64)> = grid
                .par_iter()
                .map(|&alpha| -> Result<(f64, f64, f64, f64)> {
                    let gains = EdgeGains::uniform(topo, alpha)?;
                    let sys = assemble_closed_loop(fem, topo, &gains)?;
                    match simulate_constant(&sys, x0, t_end, dt) {
                        Ok(trace) => {
                            let j1 = trace.cost_j1();
                            let j2 = trace.cost_j2();
                            Ok((alpha, j2, j1, j2 - j1))
                        }
                        // A grid point that blows up is reported as
                        // infinitely expensive rather than aborting the sweep.
                        Err(Error::Instability { .. }) => {
                            Ok((alpha, f64::INFINITY, f64::INFINITY, f64::INFINITY))
                        }
                        Err(other) => Err(other),
                    }
                })
                .collect::<Result<Vec<_>>>()?;

            let best = rows
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
                .expect("grid is nonempty");
            let (alpha, j2, j1, _) = rows[best];
            let gains = EdgeGains::uniform(topo, alpha)?;

            let mut report = CostReport::new("design2-uniform");
            report.gains = Some(gains.clone());
            report.j1 = Some(j1);
            report.j2 = Some(j2);
            report.sweep_table = Some(rows);
            report.wall_time = start.elapsed();
            Ok((gains, report))
        }
        Design2Mode::MultiGain => {
            let n_vars = topo.edges().len();
            let symmetric = true;
            let objective = |vars: &[f64]| -> f64 {
                let gains = expand_gains(topo, symmetric, vars);
                let sys = match assemble_closed_loop(fem, topo, &gains) {
                    Ok(s) => s,
                    Err(_) => return f64::INFINITY,
                };
                match simulate_constant(&sys, x0, t_end, dt) {
                    Ok(trace) => trace.cost_j2(),
                    Err(_) => f64::INFINITY,
                }
            };

            let static_seed = compress_gains(topo, symmetric, &static_gains(fem, topo, x0)?);
            let seeds = vec![static_seed, vec![0.0; n_vars], vec![1.0; n_vars]];
            let mut best_vars = seeds[0].clone();
            let mut best_f = f64::INFINITY;
            for seed in &seeds {
                let (vars, f) = nelder_mead(&objective, seed, 100 * n_vars.max(1));
                if f < best_f {
                    best_f = f;
                    best_vars = vars;
                }
            }
            let gains = expand_gains(topo, symmetric, &best_vars);
            let sys = assemble_closed_loop(fem, topo, &gains)?;
            let trace = simulate_constant(&sys, x0, t_end, dt)?;

            let mut report = CostReport::new("design2-multi");
            report.gains = Some(gains.clone());
            report.j1 = Some(trace.cost_j1());
            report.j2 = Some(trace.cost_j2());
            report.wall_time = start.elapsed();
            Ok((gains, report))
        }
    }
}

/// Design III: LQR on the augmented-input aggregate system. Solves the
/// Riccati equation with the aggregate cost weight and identity control
/// weight and returns the feedback `gain = r⁻¹·b_tildeᵀ·P` applied as
/// `Ũ = -gain·Q`.
pub fn design3_lqr(
    fem: &FemModel,
    topo: &Topology,
    lap: &Laplacian,
) -> Result<(DMatrix<f64>, CostReport)> {
    let start = Instant::now();
    let (a_open, b_tilde) = assemble_augmented(fem, topo, lap)?;
    let q_weight = aggregate_weight(fem, topo.n_agents())?;
    let r = DMatrix::identity(2 * topo.n_agents(), 2 * topo.n_agents());

    let sol = solve_are(&a_open, &b_tilde, &q_weight, &r)?;
    let gain = b_tilde.transpose() * &sol.p;

    let mut report = CostReport::new("design3");
    report.laplacian = Some(lap.matrix().clone());
    report.trace_pi = Some(sol.p.trace());
    report.residual = Some(sol.residual_norm);
    report.pi = Some(sol.p);
    report.wall_time = start.elapsed();
    Ok((gain, report))
}

/// Static fallback: each gain proportional to the initial pairwise mismatch,
/// `α_ij = |x_i(0) - x_j(0)|` in the mass norm.
pub fn static_gains(fem: &FemModel, topo: &Topology, x0: &[SpatialField]) -> Result<EdgeGains> {
    if x0.len() != topo.n_agents() {
        return Err(Error::Dimension(format!(
            "{} initial states for {} agents",
            x0.len(),
            topo.n_agents()
        )));
    }
    let mut values = Vec::with_capacity(topo.ordered_pairs().len());
    for &(i, j) in topo.ordered_pairs() {
        let diff = &x0[i] - &x0[j];
        values.push(l2_norm(fem, &diff)?);
    }
    EdgeGains::unchecked(topo, values)
}

/// Simulate the augmented-input loop `Q̇ = (a_open - b_tilde·gain)·Q` and
/// accumulate `∫ Qᵀ·q_weight·Q + |gain·Q|² dτ` by trapezoidal quadrature.
/// Returns the cost and per-step rows `[t, |X|, |Z|]` for reporting.
#[allow(clippy::too_many_arguments)]
pub fn augmented_cost(
    fem: &FemModel,
    a_open: &DMatrix<f64>,
    b_tilde: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    q_weight: &DMatrix<f64>,
    x0: &[SpatialField],
    t_end: f64,
    dt: f64,
) -> Result<(f64, Vec<[f64; 3]>)> {
    let dim = a_open.nrows();
    let n = fem.n;
    let n_agents = dim / n;
    if x0.len() != n_agents {
        return Err(Error::Dimension(format!(
            "{} initial states for {n_agents} agents",
            x0.len()
        )));
    }
    let a_closed = a_open - b_tilde * gain;
    let (dt_eff, _) = crate::sim::effective_dt(&a_closed, dt)?;
    let n_steps = crate::sim::step_count(t_end, dt_eff)?;

    let mut q = stack_states(fem, x0)?;
    let rhs = |y: &DVector<f64>| &a_closed * y;

    let integrand = |q: &DVector<f64>| -> f64 {
        let state_cost = (q_weight * q).dot(q);
        let u = gain * q;
        state_cost + u.dot(&u)
    };
    let metrics = |t: f64, q: &DVector<f64>| -> [f64; 3] {
        let mut x2 = 0.0;
        let mut mean = DVector::zeros(n);
        for i in 0..n_agents {
            let qi = q.rows(i * n, n);
            x2 += (&fem.mass * qi.clone_owned()).dot(&qi.clone_owned());
            mean += qi;
        }
        mean /= n_agents as f64;
        let mut z2 = 0.0;
        for i in 0..n_agents {
            let zi = q.rows(i * n, n).clone_owned() - &mean;
            z2 += (&fem.mass * &zi).dot(&zi);
        }
        [t, x2.max(0.0).sqrt(), z2.max(0.0).sqrt()]
    };

    let mut cost = 0.0;
    let mut prev = integrand(&q);
    let mut rows = Vec::with_capacity(n_steps + 1);
    rows.push(metrics(0.0, &q));
    for step in 1..=n_steps {
        q = rk4_step_vec(&rhs, &q, dt_eff);
        let cur = integrand(&q);
        if !cur.is_finite() {
            return Err(Error::Instability {
                t: step as f64 * dt_eff,
                msg: "augmented loop diverged".into(),
            });
        }
        cost += dt_eff / 2.0 * (prev + cur);
        prev = cur;
        rows.push(metrics(step as f64 * dt_eff, &q));
    }
    Ok((cost, rows))
}

fn rk4_step_vec<F: Fn(&DVector<f64>) -> DVector<f64>>(
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

/// Map a search vector to gains: one variable per unordered edge in
/// symmetric mode (mirrored to both directions), one per ordered pair
/// otherwise. Values are clamped to be nonnegative, which is how the
/// optimizer's iterates are projected onto the admissible set.
fn expand_gains(topo: &Topology, symmetric: bool, vars: &[f64]) -> EdgeGains {
    let values: Vec<f64> = if symmetric {
        topo.ordered_pairs()
            .iter()
            .map(|&(i, j)| {
                let e = (i.min(j), i.max(j));
                let idx = topo.edges().binary_search(&e).unwrap();
                vars[idx].max(0.0)
            })
            .collect()
    } else {
        vars.iter().map(|v| v.max(0.0)).collect()
    };
    EdgeGains::unchecked(topo, values).expect("canonical pair order")
}

/// Inverse of [`expand_gains`]: directed gains average over the two
/// directions in symmetric mode.
fn compress_gains(topo: &Topology, symmetric: bool, gains: &EdgeGains) -> Vec<f64> {
    if symmetric {
        topo.edges()
            .iter()
            .map(|&(i, j)| {
                let a = gains.get(i, j).unwrap();
                let b = gains.get(j, i).unwrap();
                (a + b) / 2.0
            })
            .collect()
    } else {
        gains.values().to_vec()
    }
}

/// Derivative-free Nelder–Mead with standard coefficients (reflection 1,
/// expansion 2, contraction 0.5, shrink 0.5). The objective is responsible
/// for projecting iterates into its feasible set; infeasible points may
/// return infinity.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    objective: &F,
    x0: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    if dim == 0 {
        return (Vec::new(), objective(&[]));
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut v = x0.to_vec();
        let step = if v[i].abs() > 1e-12 {
            0.25 * v[i].abs()
        } else {
            0.25
        };
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| objective(v)).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..simplex.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let f_spread = (values[worst] - values[best]).abs();
        let x_spread = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if f_spread <= 1e-12 * (1.0 + values[best].abs()) && x_spread <= 1e-10 {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }

        let blend = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = blend(1.0);
        let f_ref = objective(&reflected);
        if f_ref < values[best] {
            let expanded = blend(2.0);
            let f_exp = objective(&expanded);
            if f_exp < f_ref {
                simplex[worst] = expanded;
                values[worst] = f_exp;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_ref;
            }
        } else if f_ref < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_ref;
        } else {
            let contracted = blend(-0.5);
            let f_con = objective(&contracted);
            if f_con < values[worst] {
                simplex[worst] = contracted;
                values[worst] = f_con;
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[best].clone();
                for idx in 0..simplex.len() {
                    if idx == best {
                        continue;
                    }
                    for (x, b) in simplex[idx].iter_mut().zip(&best_point) {
                        *x = b + 0.5 * (*x - b);
                    }
                    values[idx] = objective(&simplex[idx]);
                }
            }
        }
    }

    let mut best_idx = 0;
    for i in 1..values.len() {
        if values[i] < values[best_idx] {
            best_idx = i;
        }
    }
    let best: Vec<f64> = simplex[best_idx].iter().map(|v| v.max(0.0)).collect();
    let f_best = objective(&best);
    (best, f_best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_fem;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn dense_trace(fem: &FemModel, topo: &Topology, gains: &EdgeGains) -> f64 {
        let q = aggregate_weight(fem, topo.n_agents()).unwrap();
        let sys = assemble_closed_loop(fem, topo, gains).unwrap();
        solve_lyapunov(&sys.a_cl, &q).unwrap().p.trace()
    }

    #[test]
    fn mode_decomposed_trace_matches_the_dense_solve() {
        let fem = build_fem(8, 0.05, 0.5, 0.1, 5e-4, 1e-2).unwrap();
        let topo = Topology::benchmark();
        let q = aggregate_weight(&fem, topo.n_agents()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(777);

        for _ in 0..3 {
            let mut by_edge = HashMap::new();
            for &(i, j) in topo.edges() {
                by_edge.insert((i, j), rng.random_range(0.1..2.0));
            }
            let values: Vec<f64> = topo
                .ordered_pairs()
                .iter()
                .map(|&(i, j)| {
                    let key = if i < j { (i, j) } else { (j, i) };
                    by_edge[&key]
                })
                .collect();
            let gains = EdgeGains::unchecked(&topo, values).unwrap();
            let (modal, res) = closed_loop_trace(&fem, &topo, &q, &gains).unwrap();
            assert_relative_eq!(modal, dense_trace(&fem, &topo, &gains), max_relative = 1e-10);
            assert!(res < 1e-8);
        }

        // A zero Laplacian has a fully repeated eigenvalue; the diagonal
        // blocks decouple for any orthonormal basis, so this must still
        // match.
        let zero = EdgeGains::uniform(&topo, 0.0).unwrap();
        let (modal, _) = closed_loop_trace(&fem, &topo, &q, &zero).unwrap();
        assert_relative_eq!(modal, dense_trace(&fem, &topo, &zero), max_relative = 1e-10);

        // Asymmetric gains must route to the full-size solve.
        let mut values: Vec<f64> = topo.ordered_pairs().iter().map(|_| 1.0).collect();
        values[0] = 1.7;
        let skew = EdgeGains::unchecked(&topo, values).unwrap();
        let (modal, _) = closed_loop_trace(&fem, &topo, &q, &skew).unwrap();
        assert_relative_eq!(modal, dense_trace(&fem, &topo, &skew), max_relative = 1e-12);
    }
}
