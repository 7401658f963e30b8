//! Assembly and quadrature checks for the single-agent discretization.

use approx::assert_relative_eq;
use nalgebra::DVector;
use netsync::fem::{
    benchmark_initial_states, benchmark_profiles, build_fem, interpolate, l2_inner, l2_norm,
};

fn small_model() -> netsync::FemModel {
    build_fem(3, 0.05, 0.5, 0.1, 5e-4, 1e-2).unwrap()
}

#[test]
fn mass_and_stiffness_have_known_shape() {
    let m = small_model();
    let h = 0.25;
    assert_eq!(m.h, h);

    // Tridiagonal with the linear-spline element values.
    assert_relative_eq!(m.mass[(0, 0)], 2.0 * h / 3.0);
    assert_relative_eq!(m.mass[(0, 1)], h / 6.0);
    assert_eq!(m.mass[(0, 2)], 0.0);
    assert_relative_eq!(m.stiff[(1, 1)], 2.0 / h);
    assert_relative_eq!(m.stiff[(1, 0)], -1.0 / h);
    assert_eq!(m.stiff[(2, 0)], 0.0);

    assert_eq!(m.mass, m.mass.transpose());
    assert_eq!(m.stiff, m.stiff.transpose());

    // Sum over all entries is 𝟙ᵀM𝟙 = ∫(Σφ_j)² restricted to the interior
    // elements: 2/3 for n = 3 on [0, 1].
    let total: f64 = m.mass.iter().sum();
    assert_relative_eq!(total, 2.0 / 3.0, epsilon = 1e-15);

    // Interior stiffness rows telescope to zero; the two boundary-adjacent
    // rows keep 1/h from the missing neighbor.
    let row_sums: Vec<f64> = m.stiff.row_iter().map(|r| r.sum()).collect();
    assert_relative_eq!(row_sums[0], 1.0 / h);
    assert_relative_eq!(row_sums[1], 0.0, epsilon = 1e-12);
    assert_relative_eq!(row_sums[2], 1.0 / h);
}

#[test]
fn pulse_load_vector_matches_exact_integrals() {
    // Independent oracle: the hat-against-box integrals for n = 40,
    // pulse [0.45, 0.55], evaluated in exact rational arithmetic.
    let m = build_fem(40, 0.05, 0.5, 0.1, 5e-4, 1e-2).unwrap();
    let expected: [(usize, f64); 6] = [
        (17, 121.0 / 3280.0),
        (18, 719.0 / 3280.0),
        (19, 10.0 / 41.0),
        (20, 10.0 / 41.0),
        (21, 719.0 / 3280.0),
        (22, 121.0 / 3280.0),
    ];
    for (j, v) in expected {
        assert_relative_eq!(m.b_vec[j], v, epsilon = 1e-15);
    }
    for j in 0..m.n {
        if !(17..=22).contains(&j) {
            assert_eq!(m.b_vec[j], 0.0, "b_vec[{j}] outside the pulse support");
        }
    }
    // The pulse has unit integral and the hats partition unity away from the
    // boundary, so the load entries sum to exactly one.
    assert_relative_eq!(m.b_vec.sum(), 1.0, epsilon = 1e-14);

    assert_eq!(m.k_vec, &m.b_vec * m.c_k);
    assert_eq!(m.f_vec, &m.b_vec * m.c_f);
}

#[test]
fn full_width_pulse_loads_every_hat_equally() {
    // Width 1.0 centered at 0.5 covers the whole domain; each hat integrates
    // to h, and the total misses 1 by exactly the two boundary half-hats.
    let m = build_fem(8, 0.1, 0.5, 1.0, 1e-3, 1e-3).unwrap();
    for j in 0..m.n {
        assert_relative_eq!(m.b_vec[j], m.h, epsilon = 1e-15);
    }
    assert_relative_eq!(m.b_vec.sum(), 1.0 - m.h, epsilon = 1e-14);
}

#[test]
fn generalized_spectrum_matches_closed_form() {
    // The pencil (stiff, mass) on a uniform mesh has the classical
    // eigenvalues λ_k = (6/h²)(1 - cos kπh)/(2 + cos kπh).
    let m = build_fem(40, 0.05, 0.5, 0.1, 5e-4, 1e-2).unwrap();
    let eigs = m.dirichlet_spectrum();
    assert_eq!(eigs.len(), 40);
    for (k, lam) in eigs.iter().enumerate() {
        let theta = (k as f64 + 1.0) * std::f64::consts::PI * m.h;
        let closed = 6.0 / (m.h * m.h) * (1.0 - theta.cos()) / (2.0 + theta.cos());
        assert_relative_eq!(*lam, closed, max_relative = 1e-10);
    }
    // The smallest one approximates π² from above at O(h⁴).
    let pi2 = std::f64::consts::PI.powi(2);
    assert!(eigs[0] > pi2);
    assert!((eigs[0] - pi2) / pi2 < 1e-3);
}

#[test]
fn open_loop_and_actuation_solve_against_mass() {
    let m = build_fem(12, 0.07, 0.5, 0.1, 2e-3, 4e-3).unwrap();
    // M · open_loop = -a1 · K and M · b2 = b_vec, both to roundoff.
    let lhs = &m.mass * m.open_loop();
    let rhs = &m.stiff * (-m.a1);
    assert_relative_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
    let back = &m.mass * m.b2();
    assert_relative_eq!((back - &m.b_vec).norm(), 0.0, epsilon = 1e-13);

    let closed = m.a_closed();
    let expected = m.open_loop() - m.b2() * m.k_vec.transpose();
    assert_eq!(closed, expected);
}

#[test]
fn interpolation_is_nodal() {
    let m = small_model();
    let u = interpolate(&m, |xi| xi * (1.0 - xi)).unwrap();
    for (j, node) in m.nodes().iter().enumerate() {
        assert_relative_eq!(u[j], node * (1.0 - node));
    }
    assert!(interpolate(&m, |xi| 1.0 / (xi - 0.25)).is_err());
}

#[test]
fn inner_product_uses_the_mass_matrix() {
    let m = small_model();
    let e0 = DVector::from_fn(3, |j, _| if j == 0 { 1.0 } else { 0.0 });
    let e1 = DVector::from_fn(3, |j, _| if j == 1 { 1.0 } else { 0.0 });
    assert_relative_eq!(l2_norm(&m, &e0).unwrap(), (2.0 * m.h / 3.0).sqrt());
    assert_relative_eq!(l2_inner(&m, &e0, &e1).unwrap(), m.h / 6.0);
    assert_relative_eq!(
        l2_inner(&m, &e0, &e1).unwrap(),
        l2_inner(&m, &e1, &e0).unwrap()
    );
    let short = DVector::zeros(2);
    assert!(l2_norm(&m, &short).is_err());
}

#[test]
fn benchmark_states_sample_the_profiles() {
    let m = build_fem(40, 0.05, 0.5, 0.1, 5e-4, 1e-2).unwrap();
    let states = benchmark_initial_states(&m);
    let profiles = benchmark_profiles();
    assert_eq!(states.len(), 5);
    for (x, f) in states.iter().zip(profiles.iter()) {
        assert_eq!(x.len(), 40);
        for (j, node) in m.nodes().iter().enumerate() {
            assert_relative_eq!(x[j], f(*node));
        }
    }
    // Spot values pin the amplitudes and signs of the first and last profile.
    let xi = m.nodes()[19];
    assert_relative_eq!(
        states[0][19],
        39.4 * (1.3 * std::f64::consts::PI * xi).sin() * (-7.0 * xi * xi).exp()
    );
    assert!(states[4].amax() > 10.0);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(build_fem(1, 0.05, 0.5, 0.1, 0.0, 0.0).is_err());
    assert!(build_fem(8, 0.0, 0.5, 0.1, 0.0, 0.0).is_err());
    assert!(build_fem(8, -1.0, 0.5, 0.1, 0.0, 0.0).is_err());
    assert!(build_fem(8, 0.05, 0.0, 0.1, 0.0, 0.0).is_err());
    // Support [0.9, 1.1] pokes outside the domain.
    assert!(build_fem(8, 0.05, 1.0, 0.2, 0.0, 0.0).is_err());
    assert!(build_fem(8, 0.05, 0.5, f64::NAN, 0.0, 0.0).is_err());
    assert!(build_fem(8, 0.05, 0.5, 0.1, f64::INFINITY, 0.0).is_err());
}
