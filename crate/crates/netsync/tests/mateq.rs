//! Matrix-equation solver checks against closed forms and a dense
//! vectorization oracle.

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use netsync::mateq::{is_hurwitz, kappa_margin, solve_are, solve_lyapunov};
use netsync::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn scalar_and_diagonal_lyapunov_closed_forms() {
    let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
    let q = DMatrix::from_row_slice(1, 1, &[2.0]);
    let sol = solve_lyapunov(&a, &q).unwrap();
    assert_relative_eq!(sol.p[(0, 0)], 1.0, epsilon = 1e-14);
    assert!(sol.residual_norm < 1e-13);

    // Diagonal a decouples: p_ii = q_ii / (2 |a_ii|).
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
    let q = DMatrix::identity(2, 2);
    let sol = solve_lyapunov(&a, &q).unwrap();
    assert_relative_eq!(sol.p[(0, 0)], 0.5, epsilon = 1e-14);
    assert_relative_eq!(sol.p[(1, 1)], 0.25, epsilon = 1e-14);
    assert_relative_eq!(sol.p[(0, 1)], 0.0, epsilon = 1e-14);
}

#[test]
fn complex_spectrum_exercises_the_two_by_two_blocks() {
    // Eigenvalues -1 ± 5i and -3 ± 2i force 2x2 blocks in the Schur form.
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            -1.0, 5.0, 0.3, 0.0, //
            -5.0, -1.0, 0.0, 0.1, //
            0.0, 0.0, -3.0, 2.0, //
            0.2, 0.0, -2.0, -3.0,
        ],
    );
    let q = DMatrix::identity(4, 4) * 2.0;
    let sol = solve_lyapunov(&a, &q).unwrap();
    let res = (a.transpose() * &sol.p + &sol.p * &a + &q).norm();
    assert!(res < 1e-12, "residual {res}");
    assert_relative_eq!((&sol.p - sol.p.transpose()).norm(), 0.0, epsilon = 1e-14);
}

#[test]
fn lyapunov_rejects_bad_operands() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
    let q_asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
    assert!(matches!(
        solve_lyapunov(&a, &q_asym),
        Err(Error::InvalidInput(_))
    ));

    let unstable = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(matches!(
        solve_lyapunov(&unstable, &DMatrix::identity(2, 2)),
        Err(Error::NotHurwitz { .. })
    ));

    let q3 = DMatrix::identity(3, 3);
    assert!(matches!(solve_lyapunov(&a, &q3), Err(Error::Dimension(_))));
}

#[test]
fn hurwitz_test_reports_the_abscissa() {
    let marginal = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let (ok, re) = is_hurwitz(&marginal).unwrap();
    assert!(!ok);
    assert_relative_eq!(re, 0.0, epsilon = 1e-10);

    let stable = DMatrix::from_row_slice(2, 2, &[-1.0, 100.0, 0.0, -2.0]);
    let (ok, re) = is_hurwitz(&stable).unwrap();
    assert!(ok);
    assert_relative_eq!(re, -1.0, epsilon = 1e-9);
}

#[test]
fn riccati_scalar_closed_forms() {
    let one = DMatrix::from_row_slice(1, 1, &[1.0]);
    let zero = DMatrix::from_row_slice(1, 1, &[0.0]);

    // a = 0, b = q = r = 1: p² = 1.
    let sol = solve_are(&zero, &one, &one, &one).unwrap();
    assert_relative_eq!(sol.p[(0, 0)], 1.0, epsilon = 1e-13);

    // a = 1, q = 2: p² - 2p - 2 = 0, stabilizing root 1 + √3.
    let two = DMatrix::from_row_slice(1, 1, &[2.0]);
    let sol = solve_are(&one, &one, &two, &one).unwrap();
    assert_relative_eq!(sol.p[(0, 0)], 1.0 + 3.0f64.sqrt(), epsilon = 1e-12);

    // a = 1, q = 1 also runs the anti-stable initialization path:
    // p² - 2p - 1 = 0, root 1 + √2.
    let sol = solve_are(&one, &one, &one, &one).unwrap();
    assert_relative_eq!(sol.p[(0, 0)], 1.0 + 2.0f64.sqrt(), epsilon = 1e-12);
}

#[test]
fn riccati_handles_an_unstable_multivariable_pair() {
    // Both open-loop modes are unstable, so Newton must start from the
    // pole-shifting initialization rather than k₀ = 0.
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 2.0]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::from_row_slice(1, 1, &[0.5]);
    let sol = solve_are(&a, &b, &q, &r).unwrap();

    let r_inv = r.clone().try_inverse().unwrap();
    let quad = &sol.p * &b * &r_inv * b.transpose() * &sol.p;
    let res = (a.transpose() * &sol.p + &sol.p * &a - quad + &q).norm();
    assert!(res < 1e-10, "residual {res}");

    let gain = r_inv * b.transpose() * &sol.p;
    let (ok, re) = is_hurwitz(&(&a - &b * gain)).unwrap();
    assert!(ok, "closed loop abscissa {re}");

    // p must be symmetric positive definite for a detectable q.
    assert!(nalgebra::Cholesky::new(sol.p.clone()).is_some());
}

#[test]
fn unstabilizable_pairs_are_reported() {
    // The +1 mode never sees the input.
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::identity(1, 1);
    assert!(matches!(
        solve_are(&a, &b, &q, &r),
        Err(Error::NotStabilizable { .. })
    ));

    // Uncontrollable but stable extra mode is fine.
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    assert!(solve_are(&a, &b, &q, &r).is_ok());
}

#[test]
fn weighted_margin_matches_the_unweighted_case_for_identity() {
    let a = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -3.0]);
    let w = DMatrix::identity(2, 2);
    assert_relative_eq!(kappa_margin(&a, &w).unwrap(), 2.0, epsilon = 1e-12);

    // Similarity with the Cholesky factor leaves symmetric a's spectrum
    // untouched only when the weight commutes; here just require a valid
    // positive margin for an SPD weight.
    let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    assert!(kappa_margin(&a, &w).unwrap() > 0.0);

    let not_spd = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!(kappa_margin(&a, &not_spd).is_err());
}

#[test]
fn seeded_random_systems_solve_to_tight_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for trial in 0..20 {
        let m = 2 + (trial % 7);
        let raw = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        // Shift by a norm bound to force stability.
        let a = &raw - DMatrix::identity(m, m) * (raw.norm() + 0.3);
        let qh = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q = &qh * qh.transpose() + DMatrix::identity(m, m) * 0.1;

        let sol = solve_lyapunov(&a, &q).unwrap();
        let res = (a.transpose() * &sol.p + &sol.p * &a + &q).norm();
        let scale = a.norm() * sol.p.norm() + q.norm();
        assert!(res <= 1e-11 * scale, "m = {m}: residual {res} vs {scale}");
        assert!(nalgebra::Cholesky::new(sol.p.clone()).is_some());
    }
}

/// Dense oracle: solve `(I ⊗ aᵀ + aᵀ ⊗ I) vec(p) = -vec(q)` directly.
fn kron_oracle(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let eye = DMatrix::identity(m, m);
    let big = eye.kronecker(&a.transpose()) + a.transpose().kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice()) * -1.0;
    let x = big.lu().solve(&rhs).expect("stable spectrum, nonsingular");
    DMatrix::from_column_slice(m, m, x.as_slice())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lyapunov_matches_the_vectorized_oracle(
        m in 2usize..5,
        seed in prop::num::u64::ANY,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let a = &raw - DMatrix::identity(m, m) * (raw.norm() + 0.5);
        let qh = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q = &qh * qh.transpose() + DMatrix::identity(m, m);

        let sol = solve_lyapunov(&a, &q).unwrap();
        let oracle = kron_oracle(&a, &q);
        let scale = oracle.amax().max(1.0);
        prop_assert!(
            (&sol.p - &oracle).amax() <= 1e-9 * scale,
            "entrywise gap {} at scale {scale}",
            (&sol.p - &oracle).amax()
        );
    }
}
