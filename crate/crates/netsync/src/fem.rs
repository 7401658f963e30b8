//! Galerkin semi-discretization of one diffusion agent on [0, 1] with
//! homogeneous Dirichlet boundaries, using `n` interior linear splines.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Coefficient vector of a field in the interior linear-spline basis.
pub type SpatialField = DVector<f64>;

/// Discretized agent: Gram matrices, actuation load vector, and the two
/// gain functionals derived from the same actuation shape.
#[derive(Debug, Clone)]
pub struct FemModel {
    /// Number of interior basis functions.
    pub n: usize,
    /// Mesh width, `1 / (n + 1)`.
    pub h: f64,
    /// Diffusion coefficient.
    pub a1: f64,
    /// Feedback gain constant applied to the actuation shape.
    pub c_k: f64,
    /// Synchronization gain constant applied to the actuation shape.
    pub c_f: f64,
    /// Gram matrix of the basis functions (tridiagonal, SPD).
    pub mass: DMatrix<f64>,
    /// Gram matrix of the basis derivatives (tridiagonal, SPD).
    pub stiff: DMatrix<f64>,
    /// Load vector of the actuation pulse: `b_vec[j] = ∫ b(ξ) φ_j(ξ) dξ`.
    pub b_vec: DVector<f64>,
    /// Discrete feedback functional, `c_k · b_vec`.
    pub k_vec: DVector<f64>,
    /// Discrete synchronization functional, `c_f · b_vec`.
    pub f_vec: DVector<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    a_open: DMatrix<f64>,
    b2: DVector<f64>,
}

/// Assemble the model. The actuation `b(ξ)` is the indicator of
/// `[pulse_center - pulse_width/2, pulse_center + pulse_width/2]` scaled by
/// `1/pulse_width` (unit integral); its load vector is integrated exactly.
pub fn build_fem(
    n: usize,
    a1: f64,
    pulse_center: f64,
    pulse_width: f64,
    c_k: f64,
    c_f: f64,
) -> Result<FemModel> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "n must be at least 2, got {n}"
        )));
    }
    if !(a1 > 0.0) || !a1.is_finite() {
        return Err(Error::InvalidInput(format!(
            "a1 must be positive, got {a1}"
        )));
    }
    if !(pulse_width > 0.0) || !pulse_width.is_finite() {
        return Err(Error::InvalidInput(format!(
            "pulse_width must be positive, got {pulse_width}"
        )));
    }
    if !(pulse_center > 0.0 && pulse_center < 1.0) {
        return Err(Error::InvalidInput(format!(
            "pulse_center must lie in (0, 1), got {pulse_center}"
        )));
    }
    let lo = pulse_center - pulse_width / 2.0;
    let hi = pulse_center + pulse_width / 2.0;
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::InvalidInput(format!(
            "pulse support [{lo}, {hi}] extends outside [0, 1]"
        )));
    }
    if !c_k.is_finite() || !c_f.is_finite() {
        return Err(Error::InvalidInput("gain constants must be finite".into()));
    }

    let h = 1.0 / (n as f64 + 1.0);
    let mut mass = DMatrix::zeros(n, n);
    let mut stiff = DMatrix::zeros(n, n);
    for i in 0..n {
        mass[(i, i)] = 2.0 * h / 3.0;
        stiff[(i, i)] = 2.0 / h;
        if i + 1 < n {
            mass[(i, i + 1)] = h / 6.0;
            mass[(i + 1, i)] = h / 6.0;
            stiff[(i, i + 1)] = -1.0 / h;
            stiff[(i + 1, i)] = -1.0 / h;
        }
    }

    let mut b_vec = DVector::zeros(n);
    for j in 0..n {
        let node = (j as f64 + 1.0) * h;
        b_vec[j] = hat_integral(node, h, lo, hi) / pulse_width;
    }
    let k_vec = &b_vec * c_k;
    let f_vec = &b_vec * c_f;

    let mass_chol = Cholesky::new(mass.clone())
        .ok_or_else(|| Error::Conditioning("mass matrix is not positive definite".into()))?;
    let a_open = -(mass_chol.solve(&stiff)) * a1;
    let b2 = mass_chol.solve(&b_vec);

    Ok(FemModel {
        n,
        h,
        a1,
        c_k,
        c_f,
        mass,
        stiff,
        b_vec,
        k_vec,
        f_vec,
        mass_chol,
        a_open,
        b2,
    })
}

/// Exact integral of the hat function centered at `node` (support width `h`
/// on each side) over the interval `[lo, hi]`.
fn hat_integral(node: f64, h: f64, lo: f64, hi: f64) -> f64 {
    // Left ramp (x - node + h)/h on [node - h, node]: antiderivative
    // (x - node + h)^2 / (2h).
    let mut total = 0.0;
    let la = lo.max(node - h);
    let lb = hi.min(node);
    if la < lb {
        let f = |x: f64| (x - node + h).powi(2) / (2.0 * h);
        total += f(lb) - f(la);
    }
    // Right ramp (node + h - x)/h on [node, node + h]: antiderivative
    // -(node + h - x)^2 / (2h).
    let ra = lo.max(node);
    let rb = hi.min(node + h);
    if ra < rb {
        let g = |x: f64| -(node + h - x).powi(2) / (2.0 * h);
        total += g(rb) - g(ra);
    }
    total
}

impl FemModel {
    /// Interior node positions `ξ_j = (j + 1) h`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| (j as f64 + 1.0) * self.h).collect()
    }

    /// Open-loop state matrix `-a1 · mass⁻¹ · stiff`.
    pub fn open_loop(&self) -> &DMatrix<f64> {
        &self.a_open
    }

    /// Mass-solved actuation direction `mass⁻¹ · b_vec`.
    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    /// Single-agent closed loop `A_c = open_loop - b2 · k_vecᵀ`.
    pub fn a_closed(&self) -> DMatrix<f64> {
        &self.a_open - &self.b2 * self.k_vec.transpose()
    }

    /// Solve `mass · x = rhs` columnwise with the prefactorized mass matrix.
    pub fn mass_solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.mass_chol.solve(rhs)
    }

    /// Eigenvalues of the generalized problem `stiff v = λ mass v`, sorted
    /// ascending. Computed through the Cholesky similarity
    /// `L⁻¹ stiff L⁻ᵀ`, which is symmetric.
    pub fn dirichlet_spectrum(&self) -> Vec<f64> {
        let l = self.mass_chol.l();
        let t1 = l
            .solve_lower_triangular(&self.stiff)
            .expect("mass Cholesky factor is nonsingular");
        let t2 = l
            .solve_lower_triangular(&t1.transpose())
            .expect("mass Cholesky factor is nonsingular");
        let sym = (t2.transpose() + t2) * 0.5;
        let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        eigs
    }
}

/// Inner product `uᵀ · mass · v` of two coefficient vectors.
pub fn l2_inner(m: &FemModel, u: &SpatialField, v: &SpatialField) -> Result<f64> {
    if u.len() != m.n || v.len() != m.n {
        return Err(Error::Dimension(format!(
            "fields of length {} and {} against a model with n = {}",
            u.len(),
            v.len(),
            m.n
        )));
    }
    Ok((u.transpose() * &m.mass * v)[(0, 0)])
}

/// Norm induced by [`l2_inner`].
pub fn l2_norm(m: &FemModel, u: &SpatialField) -> Result<f64> {
    Ok(l2_inner(m, u, u)?.max(0.0).sqrt())
}

/// Nodal interpolation of a function onto the spline basis (linear splines
/// are nodal, so the coefficients are the nodal values).
pub fn interpolate<F: Fn(f64) -> f64>(m: &FemModel, f: F) -> Result<SpatialField> {
    let mut coeffs = DVector::zeros(m.n);
    for (j, node) in m.nodes().iter().enumerate() {
        let value = f(*node);
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "profile is not finite at ξ = {node}: {value}"
            )));
        }
        coeffs[j] = value;
    }
    Ok(coeffs)
}

/// The five built-in initial profiles of the benchmark scenario, evaluated
/// at the model's nodes. Agent order matches the benchmark topology.
pub fn benchmark_initial_states(m: &FemModel) -> Vec<SpatialField> {
    benchmark_profiles()
        .iter()
        .map(|f| interpolate(m, f).expect("benchmark profiles are finite on (0, 1)"))
        .collect()
}

/// The five built-in initial profiles as closures over ξ ∈ [0, 1].
pub fn benchmark_profiles() -> Vec<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    use std::f64::consts::PI;
    vec![
        Box::new(|xi: f64| 39.4 * (1.3 * PI * xi).sin() * (-7.0 * xi * xi).exp()),
        Box::new(|xi: f64| 12.6 * (2.1 * PI * xi).sin() * (1.5 * PI * xi).cos()),
        Box::new(|xi: f64| 7.6 * (3.6 * PI * xi).sin() * (-7.0 * xi * xi).exp()),
        Box::new(|xi: f64| 2.5 * (5.0 * PI * xi).sin() * (-xi * xi).exp()),
        Box::new(|xi: f64| -26.2 * (5.0 * PI * xi).sin() * (-7.0 * (xi - 0.5) * (xi - 0.5)).exp()),
    ]
}
