//! Gain-design procedures: optimizer sanity, the LQR gain identity, and the
//! augmented-cost quadrature against the plain integrator.

use approx::assert_relative_eq;
use netsync::designs::{
    augmented_cost, design1_optimize, design2_optimize, design3_lqr, static_gains, Design2Mode,
};
use netsync::fem::{benchmark_initial_states, build_fem, l2_norm};
use netsync::graph::{laplacian_from_gains, EdgeGains, Topology};
use netsync::mateq::{is_hurwitz, solve_lyapunov};
use netsync::network::{
    aggregate_weight, assemble_augmented, assemble_closed_loop, structured_feedback,
};
use netsync::sim::simulate_constant;

fn model(n: usize) -> netsync::FemModel {
    build_fem(n, 0.05, 0.5, 0.1, 5e-4, 1e-2).unwrap()
}

#[test]
fn single_agent_design1_returns_the_seed() {
    let fem = model(6);
    let topo = Topology::new(1, &[]).unwrap();
    let init = EdgeGains::zeros(&topo);
    let (gains, report) = design1_optimize(&fem, &topo, true, &init).unwrap();
    assert!(gains.values().is_empty());
    assert!(report.trace_pi.unwrap() > 0.0);
    assert!(report.residual.unwrap() < 1e-10);
}

#[test]
fn design1_never_loses_to_its_seed() {
    let fem = model(6);
    let topo = Topology::new(3, &[(1, 2), (2, 3)]).unwrap();
    let init = EdgeGains::uniform(&topo, 0.5).unwrap();

    let q_weight = aggregate_weight(&fem, 3).unwrap();
    let seed_sys = assemble_closed_loop(&fem, &topo, &init).unwrap();
    let seed_trace = solve_lyapunov(&seed_sys.a_cl, &q_weight).unwrap().p.trace();

    let (gains, report) = design1_optimize(&fem, &topo, true, &init).unwrap();
    let best = report.trace_pi.unwrap();
    assert!(
        best <= seed_trace * (1.0 + 1e-12),
        "optimizer returned {best} vs seed {seed_trace}"
    );
    // The reported trace belongs to the reported gains.
    let sys = assemble_closed_loop(&fem, &topo, &gains).unwrap();
    let recomputed = solve_lyapunov(&sys.a_cl, &q_weight).unwrap().p.trace();
    assert_relative_eq!(best, recomputed, max_relative = 1e-10);
    assert!(gains.values().iter().all(|v| *v >= 0.0));
}

#[test]
fn symmetric_design1_mirrors_the_gains() {
    let fem = model(6);
    let topo = Topology::new(3, &[(1, 2), (2, 3)]).unwrap();
    let init = EdgeGains::uniform(&topo, 0.3).unwrap();
    let (gains, _) = design1_optimize(&fem, &topo, true, &init).unwrap();
    for &(i, j) in topo.edges() {
        assert_eq!(gains.get(i, j), gains.get(j, i));
    }
}

#[test]
fn uniform_sweep_returns_the_grid_argmin() {
    let fem = model(8);
    let topo = Topology::new(3, &[(1, 2), (2, 3)]).unwrap();
    let x0 = benchmark_initial_states(&fem)[..3].to_vec();
    let grid = vec![0.0, 0.5, 1.0, 1.5];

    let (gains, report) = design2_optimize(
        &fem,
        &topo,
        &x0,
        Design2Mode::UniformSweep { grid: grid.clone() },
        0.3,
        1e-3,
    )
    .unwrap();

    let table = report.sweep_table.as_ref().unwrap();
    assert_eq!(table.len(), 4);
    for (row, alpha) in table.iter().zip(&grid) {
        assert_eq!(row.0, *alpha);
        assert!(row.1 >= row.2, "j2 contains j1");
        assert_relative_eq!(row.3, row.1 - row.2, epsilon = 1e-12);
    }
    let best = table.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(gains.values(), &[best.0; 4]);
    assert_eq!(report.j2, Some(best.1));
}

#[test]
fn sweep_evaluation_is_deterministic() {
    let fem = model(8);
    let topo = Topology::new(3, &[(1, 2), (2, 3)]).unwrap();
    let x0 = benchmark_initial_states(&fem)[..3].to_vec();
    let mode = || Design2Mode::UniformSweep {
        grid: vec![0.0, 0.4, 0.8, 1.2, 1.6],
    };
    let (_, first) = design2_optimize(&fem, &topo, &x0, mode(), 0.25, 1e-3).unwrap();
    let (_, second) = design2_optimize(&fem, &topo, &x0, mode(), 0.25, 1e-3).unwrap();
    // Bitwise equality: parallel evaluation must not perturb the results.
    assert_eq!(first.sweep_table.unwrap(), second.sweep_table.unwrap());
}

#[test]
fn per_edge_search_matches_or_beats_the_uniform_grid() {
    let fem = model(8);
    let topo = Topology::new(3, &[(1, 2), (2, 3)]).unwrap();
    let x0 = benchmark_initial_states(&fem)[..3].to_vec();

    let (_, uniform) = design2_optimize(
        &fem,
        &topo,
        &x0,
        Design2Mode::UniformSweep {
            grid: (0..=8).map(|k| 0.25 * k as f64).collect(),
        },
        0.25,
        1e-3,
    )
    .unwrap();
    let (gains, multi) =
        design2_optimize(&fem, &topo, &x0, Design2Mode::MultiGain, 0.25, 1e-3).unwrap();

    let (ju, jm) = (uniform.j2.unwrap(), multi.j2.unwrap());
    assert!(
        jm <= ju * (1.0 + 1e-9),
        "per-edge search {jm} lost to the uniform grid {ju}"
    );
    assert!(gains.values().iter().all(|v| *v >= 0.0));
}

#[test]
fn empty_or_negative_grids_are_rejected() {
    let fem = model(6);
    let topo = Topology::new(2, &[(1, 2)]).unwrap();
    let x0 = benchmark_initial_states(&fem)[..2].to_vec();
    assert!(design2_optimize(
        &fem,
        &topo,
        &x0,
        Design2Mode::UniformSweep { grid: vec![] },
        0.1,
        1e-3
    )
    .is_err());
    assert!(design2_optimize(
        &fem,
        &topo,
        &x0,
        Design2Mode::UniformSweep { grid: vec![-0.5] },
        0.1,
        1e-3
    )
    .is_err());
}

#[test]
fn lqr_gain_satisfies_its_defining_identity() {
    let fem = model(6);
    let topo = Topology::new(3, &[(1, 2), (2, 3)]).unwrap();
    let lap = laplacian_from_gains(&topo, &EdgeGains::uniform(&topo, 0.8).unwrap()).unwrap();

    let (gain, report) = design3_lqr(&fem, &topo, &lap).unwrap();
    let p = report.pi.as_ref().unwrap();
    let (a_open, b_tilde) = assemble_augmented(&fem, &topo, &lap).unwrap();

    // With identity control weight the gain is exactly b̃ᵀP.
    let expected = b_tilde.transpose() * p;
    assert!((&gain - &expected).amax() < 1e-10);
    assert_eq!(gain.shape(), (6, 18));

    // P certifies the closed loop.
    assert!(nalgebra::Cholesky::new(p.clone()).is_some());
    let (ok, re) = is_hurwitz(&(&a_open - &b_tilde * &gain)).unwrap();
    assert!(ok, "closed-loop abscissa {re}");
    assert!(report.residual.unwrap() < 1e-7 * p.norm());
}

#[test]
fn static_gains_measure_the_initial_mismatch() {
    let fem = model(8);
    let topo = Topology::benchmark();
    let x0 = benchmark_initial_states(&fem);
    let gains = static_gains(&fem, &topo, &x0).unwrap();
    for ((i, j), v) in gains.iter() {
        let expected = l2_norm(&fem, &(&x0[i] - &x0[j])).unwrap();
        assert_relative_eq!(v, expected, epsilon = 1e-13);
        assert_eq!(gains.get(j, i), Some(expected), "mismatch is symmetric");
    }
    assert!(static_gains(&fem, &topo, &x0[..2]).is_err());
}

#[test]
fn augmented_quadrature_tracks_the_plain_integrator() {
    // The structured feedback reproduces the constant-gain loop exactly, so
    // the augmented simulation must produce the same |X| and |Z| series.
    let fem = model(6);
    let topo = Topology::new(3, &[(1, 2), (2, 3)]).unwrap();
    let gains = EdgeGains::uniform(&topo, 0.6).unwrap();
    let lap = laplacian_from_gains(&topo, &gains).unwrap();
    let x0 = benchmark_initial_states(&fem)[..3].to_vec();

    let (a_open, b_tilde) = assemble_augmented(&fem, &topo, &lap).unwrap();
    let q_weight = aggregate_weight(&fem, 3).unwrap();
    let g = structured_feedback(&fem, 3);
    let (cost, rows) =
        augmented_cost(&fem, &a_open, &b_tilde, &g, &q_weight, &x0, 0.2, 1e-3).unwrap();
    assert!(cost > 0.0);

    let sys = assemble_closed_loop(&fem, &topo, &gains).unwrap();
    let trace = simulate_constant(&sys, &x0, 0.2, 1e-3).unwrap();
    assert_eq!(rows.len(), trace.len());
    for (row, k) in rows.iter().zip(0..) {
        assert_relative_eq!(row[0], trace.times[k], epsilon = 1e-12);
        assert_relative_eq!(row[1], trace.x_norm[k], epsilon = 1e-10);
        assert_relative_eq!(row[2], trace.z_norm[k], epsilon = 1e-10);
    }
}
