//! Dense matrix-equation solvers: continuous-time Lyapunov equation via the
//! Bartels–Stewart scheme (real Schur form plus quasi-triangular
//! back-substitution), the continuous-time algebraic Riccati equation via
//! Newton–Kleinman iteration, and stability diagnostics.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

/// Symmetric solution of a matrix equation plus the Frobenius norm of the
/// defining equation's residual after substitution.
#[derive(Debug, Clone)]
pub struct SymmetricSolution {
    pub p: DMatrix<f64>,
    pub residual_norm: f64,
}

/// Iteration budget for the QR sweeps of a real Schur reduction. The
/// uncapped library routines can spin forever on spectra with high
/// multiplicity (which block-structured network matrices have by
/// construction), so every decomposition here goes through this cap.
fn schur_iteration_cap(m: usize) -> usize {
    75 * m.max(1)
}

fn capped_schur(a: &DMatrix<f64>) -> Result<Schur<f64, nalgebra::Dyn>> {
    // Machine-epsilon deflation can cycle without ever deflating on spectra
    // with high multiplicity, so retry with a coarser threshold before giving
    // up; the relaxed passes still deliver backward errors near 1e-13. The
    // first pass gets a short budget (30 sweeps per eigenvalue suffices for
    // well-separated spectra) to keep the stall tax small.
    let m = a.nrows().max(1);
    for (eps, cap) in [
        (f64::EPSILON, 30 * m),
        (1e-14, schur_iteration_cap(m)),
        (1e-12, schur_iteration_cap(m)),
    ] {
        if let Some(schur) = a.clone().try_schur(eps, cap) {
            return Ok(schur);
        }
    }
    Err(Error::Conditioning(
        "Schur iteration did not converge within its budget".into(),
    ))
}

/// All eigenvalues of `a`, through the capped Schur reduction.
pub(crate) fn spectrum(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    Ok(capped_schur(a)?
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect())
}

/// Spectral abscissa test: `(true, max Re λ)` iff every eigenvalue of `a`
/// has negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> Result<(bool, f64)> {
    let (re, _im) = rightmost_eigenvalue(a)?;
    Ok((re < 0.0, re))
}

/// Eigenvalue of `a` with the largest real part, as `(re, im)`.
fn rightmost_eigenvalue(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for e in spectrum(a)? {
        if e.re > best.0 {
            best = (e.re, e.im);
        }
    }
    Ok(best)
}

/// Stability margin κ in the inner product induced by the SPD `weight`:
/// the largest κ with `A + A* ≤ -κ I`, i.e. minus the largest eigenvalue of
/// the weighted symmetrization. Nonpositive when the symmetrized part is
/// not negative definite.
pub fn kappa_margin(a: &DMatrix<f64>, weight: &DMatrix<f64>) -> Result<f64> {
    let m = a.nrows();
    if a.ncols() != m || weight.nrows() != m || weight.ncols() != m {
        return Err(Error::Dimension(
            "kappa_margin needs square matching matrices".into(),
        ));
    }
    let chol = Cholesky::new(weight.clone())
        .ok_or_else(|| Error::Conditioning("weight matrix is not positive definite".into()))?;
    let l = chol.l();
    // Similarity Lᵀ A L⁻ᵀ shares eigenvalues with the weighted
    // symmetrization; (L⁻¹ Aᵀ)ᵀ L⁻ᵀ... computed as ((L⁻¹ Aᵀ) L)ᵀ.
    let t1 = l
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::Conditioning("singular Cholesky factor".into()))?;
    let b = (t1 * &l).transpose();
    let sym = (&b + b.transpose()) * 0.5;
    let lambda_max = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(-lambda_max)
}

/// Solve `aᵀ p + p a + q = 0` for symmetric `p` with `a` Hurwitz.
///
/// Reduces `a` to real Schur form `a = U T Uᵀ`, solves the transformed
/// quasi-triangular equation blockwise, and maps back. The result is
/// symmetrized and the defining equation's residual recorded.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<SymmetricSolution> {
    let m = a.nrows();
    if a.ncols() != m || q.nrows() != m || q.ncols() != m {
        return Err(Error::Dimension(format!(
            "lyapunov operands must be square and matching: a is {}x{}, q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let q_asym = (q - q.transpose()).norm();
    if q_asym > 1e-10 * q.norm().max(1.0) {
        return Err(Error::InvalidInput(
            "lyapunov right-hand side must be symmetric".into(),
        ));
    }
    let schur = capped_schur(a)?;
    // One reduction serves both the stability precheck and the solve.
    let mut rightmost = (f64::NEG_INFINITY, 0.0);
    for e in schur.complex_eigenvalues().iter() {
        if e.re > rightmost.0 {
            rightmost = (e.re, e.im);
        }
    }
    if rightmost.0 >= 0.0 {
        return Err(Error::NotHurwitz {
            re: rightmost.0,
            im: rightmost.1,
        });
    }

    let (u, t) = schur.unpack();
    let c = -(u.transpose() * q * &u);
    let y = solve_quasi_triangular(&t, &c)?;
    let p_raw = &u * y * u.transpose();
    let p = (&p_raw + p_raw.transpose()) * 0.5;

    let residual_norm = (a.transpose() * &p + &p * a + q).norm();
    Ok(SymmetricSolution { p, residual_norm })
}

/// Solve `Tᵀ Y + Y T = C` for quasi-upper-triangular `T` (1x1 / 2x2 diagonal
/// blocks from a real Schur form) by forward block substitution. Each block
/// pair yields a linear system of size at most 4, solved by vectorization.
fn solve_quasi_triangular(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = t.nrows();
    let blocks = diagonal_blocks(t);
    let mut y = DMatrix::zeros(m, m);

    for &(k0, kn) in &blocks {
        for &(i0, inn) in &blocks {
            // rhs = C_ik - Σ_{l<i} T_liᵀ Y_lk - Σ_{p<k} Y_ip T_pk
            let mut rhs = c.view((i0, k0), (inn, kn)).clone_owned();
            if i0 > 0 {
                let t_li = t.view((0, i0), (i0, inn));
                let y_lk = y.view((0, k0), (i0, kn));
                rhs -= t_li.transpose() * y_lk;
            }
            if k0 > 0 {
                let y_ip = y.view((i0, 0), (inn, k0));
                let t_pk = t.view((0, k0), (k0, kn));
                rhs -= y_ip * t_pk;
            }

            let t_ii = t.view((i0, i0), (inn, inn)).clone_owned();
            let t_kk = t.view((k0, k0), (kn, kn)).clone_owned();
            // vec(T_iiᵀ Y + Y T_kk) = (I ⊗ T_iiᵀ + T_kkᵀ ⊗ I) vec(Y),
            // column-major vectorization.
            let small = DMatrix::identity(kn, kn).kronecker(&t_ii.transpose())
                + t_kk.transpose().kronecker(&DMatrix::identity(inn, inn));
            let rhs_vec = DVector::from_column_slice(rhs.as_slice());
            let sol = small.lu().solve(&rhs_vec).ok_or_else(|| {
                Error::Conditioning(format!(
                    "singular block pair at rows {i0}..{} / cols {k0}..{}",
                    i0 + inn,
                    k0 + kn
                ))
            })?;
            for col in 0..kn {
                for row in 0..inn {
                    y[(i0 + row, k0 + col)] = sol[col * inn + row];
                }
            }
        }
    }
    Ok(y)
}

/// Partition of a quasi-upper-triangular matrix into its diagonal blocks as
/// `(start, size)` with size 1 or 2.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let m = t.nrows();
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < m {
        if k + 1 < m && t[(k + 1, k)] != 0.0 {
            blocks.push((k, 2));
            k += 2;
        } else {
            blocks.push((k, 1));
            k += 1;
        }
    }
    blocks
}

/// Stabilizing solution of `aᵀ p + p a - p b r⁻¹ bᵀ p + q = 0`.
///
/// Newton–Kleinman iteration: each step solves the Lyapunov equation for the
/// current closed loop and refreshes the gain `k = r⁻¹ bᵀ p`. Seeded with
/// `k₀ = 0` when `a` is already Hurwitz, otherwise with Bass's
/// pole-shifted initialization.
pub fn solve_are(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<SymmetricSolution> {
    let m = a.nrows();
    let k_in = b.ncols();
    if a.ncols() != m || b.nrows() != m {
        return Err(Error::Dimension("a must be square and b conforming".into()));
    }
    if q.nrows() != m || q.ncols() != m || r.nrows() != k_in || r.ncols() != k_in {
        return Err(Error::Dimension("q or r has wrong shape".into()));
    }
    let r_chol = Cholesky::new(r.clone())
        .ok_or_else(|| Error::Conditioning("r must be positive definite".into()))?;

    check_stabilizable(a, b)?;

    let mut k_mat = initial_stabilizing_gain(a, b)?;
    let scale = a.norm() + q.norm() + 1.0;
    let mut p_prev: Option<DMatrix<f64>> = None;
    let max_iter = 60;

    for iter in 0..max_iter {
        let a_k = a - b * &k_mat;
        let q_k = q + k_mat.transpose() * r * &k_mat;
        let q_k = (&q_k + q_k.transpose()) * 0.5;
        let sol = solve_lyapunov(&a_k, &q_k).map_err(|e| match e {
            Error::NotHurwitz { re, im } => Error::NewtonStagnation {
                iterations: iter,
                residual: re.hypot(im),
            },
            other => other,
        })?;
        k_mat = r_chol.solve(&(b.transpose() * &sol.p));

        let converged = p_prev
            .as_ref()
            .map(|prev| (&sol.p - prev).norm() <= 1e-13 * sol.p.norm().max(1.0))
            .unwrap_or(false);
        p_prev = Some(sol.p);
        if converged {
            break;
        }
        if iter == max_iter - 1 {
            let p = p_prev.as_ref().unwrap();
            let res = are_residual(a, b, q, &r_chol, p);
            if res > 1e-8 * scale {
                return Err(Error::NewtonStagnation {
                    iterations: max_iter,
                    residual: res,
                });
            }
        }
    }

    let p = p_prev.expect("at least one Newton step ran");
    let p = (&p + p.transpose()) * 0.5;
    let residual_norm = are_residual(a, b, q, &r_chol, &p);

    let gain = r_chol.solve(&(b.transpose() * &p));
    let (closed_ok, re) = is_hurwitz(&(a - b * &gain))?;
    if !closed_ok {
        return Err(Error::NewtonStagnation {
            iterations: max_iter,
            residual: re,
        });
    }
    Ok(SymmetricSolution { p, residual_norm })
}

fn are_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_chol: &Cholesky<f64, nalgebra::Dyn>,
    p: &DMatrix<f64>,
) -> f64 {
    let btp = b.transpose() * p;
    let quad = p * b * r_chol.solve(&btp);
    (a.transpose() * p + p * a - quad + q).norm()
}

/// PBH test on every eigenvalue with nonnegative real part: the pair is
/// stabilizable iff `[a - λI, b]` has full row rank at each such λ. The
/// smallest singular value is computed through the real embedding of the
/// complex Gram matrix, so no complex arithmetic is needed.
fn check_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let m = a.nrows();
    let scale = a.norm() + b.norm() + 1.0;
    for e in spectrum(a)? {
        if e.re < -1e-12 * scale {
            continue;
        }
        // M = [a - (x + iy)I, b] = Mr + i Mi with Mi touching only the
        // diagonal of the left block.
        let mut mr = DMatrix::zeros(m, m + b.ncols());
        mr.view_mut((0, 0), (m, m)).copy_from(a);
        for d in 0..m {
            mr[(d, d)] -= e.re;
        }
        mr.view_mut((0, m), (m, b.ncols())).copy_from(b);
        let mut mi = DMatrix::zeros(m, m + b.ncols());
        for d in 0..m {
            mi[(d, d)] = -e.im;
        }
        // G = M Mᴴ (hermitian); its real embedding [[Gr, -Gi], [Gi, Gr]] is
        // symmetric with each eigenvalue of G doubled.
        let gr = &mr * mr.transpose() + &mi * mi.transpose();
        let gi = &mi * mr.transpose() - &mr * mi.transpose();
        let mut emb = DMatrix::zeros(2 * m, 2 * m);
        emb.view_mut((0, 0), (m, m)).copy_from(&gr);
        emb.view_mut((m, m), (m, m)).copy_from(&gr);
        emb.view_mut((0, m), (m, m)).copy_from(&(-&gi));
        emb.view_mut((m, 0), (m, m)).copy_from(&gi);
        let lambda_min = emb
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let sigma_min = lambda_min.max(0.0).sqrt();
        if sigma_min <= 1e-8 * scale {
            return Err(Error::NotStabilizable { re: e.re, im: e.im });
        }
    }
    Ok(())
}

/// Gain `k₀` with `a - b k₀` Hurwitz. Zero when `a` already is; otherwise
/// Bass's method: with β > max Re λ(a), solve
/// `(a + βI) W + W (a + βI)ᵀ = 2 b bᵀ` and take `k₀ = bᵀ W⁻¹`. W is
/// invertible when the pair is controllable.
fn initial_stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let (hurwitz, _) = is_hurwitz(a)?;
    if hurwitz {
        return Ok(DMatrix::zeros(b.ncols(), m));
    }
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::identity(m, m) * beta;
    // F W + W Fᵀ + 2bbᵀ = 0 with F = -(a + βI) Hurwitz, phrased for the
    // Lyapunov solver as Fᵀᵀ W + W Fᵀ form via the transposed argument.
    let f_t = -shifted.transpose();
    let w = solve_lyapunov(&f_t, &(b * b.transpose() * 2.0))?.p;
    // The Gramian is singular exactly on the uncontrollable subspace, where
    // stabilizable pairs need no feedback. Invert it outright while it is
    // numerically definite (ill-conditioned controllable pairs still need
    // their small directions) and fall back to an eps-cutoff pseudo-inverse
    // only once the factorization gives out.
    let k0 = match Cholesky::new(w.clone()) {
        Some(chol) => chol.solve(b).transpose(),
        None => {
            let eig = nalgebra::SymmetricEigen::new(w);
            let cutoff = eig.eigenvalues.amax() * m as f64 * 4.0 * f64::EPSILON;
            let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| {
                if l > cutoff {
                    1.0 / l
                } else {
                    0.0
                }
            }));
            let w_pinv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
            (w_pinv * b).transpose()
        }
    };
    let (ok, re) = is_hurwitz(&(a - b * &k0))?;
    if !ok {
        return Err(Error::Conditioning(format!(
            "Bass initialization failed to stabilize (abscissa {re:.3e})"
        )));
    }
    Ok(k0)
}
