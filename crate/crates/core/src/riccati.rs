//! Riccati design for the integrator chain.
//!
//! Solves `J_nᵀP + PJ_n − γ P e_n e_nᵀ P + Q = 0` for the stabilizing
//! `P = Pᵀ ≻ 0`. The stable invariant subspace of the Hamiltonian
//!
//! ```text
//!     H = [  J_n   −γ e_n e_nᵀ ]
//!         [ −Q        −J_nᵀ    ]
//! ```
//!
//! is extracted from the matrix sign function of `H`, and the resulting
//! `P` is polished with Newton (Kleinman) steps.

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper end of the admissible `γ` interval, `(1 + √5) / 2`.
pub const GAMMA_MAX: f64 = 1.618_033_988_749_895;

/// Default Frobenius residual tolerance for [`solve_are`].
pub const DEFAULT_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-9;
const MAX_SIGN_ITERS: usize = 100;
const MAX_NEWTON_STEPS: usize = 8;

/// Chain of `n` integrators: the pair `(J_n, e_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStructure {
    n: usize,
}

impl ChainStructure {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("chain order must be >= 1".into()));
        }
        Ok(Self { n })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Upper shift `J_n` (`J_n e_i = e_{i−1}`).
    pub fn jordan(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
    }

    /// Last canonical basis vector.
    pub fn e_n(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.n);
        e[self.n - 1] = 1.0;
        e
    }

    /// `J_n x` without forming the matrix.
    pub fn shift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n - 1 {
            out[i] = x[i + 1];
        }
        out
    }
}

/// One instance of the chain Riccati equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreProblem {
    pub structure: ChainStructure,
    pub gamma: f64,
    pub q: DMatrix<f64>,
}

impl AreProblem {
    /// Validates `γ ∈ (0, (1+√5)/2]` and `Q = Qᵀ ≻ 0`.
    pub fn new(structure: ChainStructure, gamma: f64, q: DMatrix<f64>) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= GAMMA_MAX + 1e-15) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} outside (0, (1+sqrt 5)/2]"
            )));
        }
        let n = structure.order();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.nrows(),
            });
        }
        let (lo, _) = spectral_bounds(&q)?;
        if lo <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Q must be positive definite (lambda_min = {lo:.3e})"
            )));
        }
        Ok(Self {
            structure,
            gamma,
            q,
        })
    }

    /// Convenience constructor for `Q = I`.
    pub fn identity(n: usize, gamma: f64) -> Result<Self> {
        Self::new(ChainStructure::new(n)?, gamma, DMatrix::identity(n, n))
    }

    /// Convenience constructor for a diagonal `Q`.
    pub fn diagonal(gamma: f64, q_diag: &[f64]) -> Result<Self> {
        let n = q_diag.len();
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(q_diag));
        Self::new(ChainStructure::new(n)?, gamma, q)
    }

    /// Frobenius norm of the equation residual at `p`.
    pub fn residual(&self, p: &DMatrix<f64>) -> f64 {
        let j = self.structure.jordan();
        let n = self.structure.order();
        // P e_n e_nᵀ P is the outer product of P's last column with itself.
        let pn = p.column(n - 1).into_owned();
        let r = j.transpose() * p + p * &j - self.gamma * &pn * pn.transpose() + &self.q;
        r.norm()
    }
}

/// Stabilizing solution plus its extreme eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreSolution {
    pub problem: AreProblem,
    pub p: DMatrix<f64>,
    pub residual_norm: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
}

impl AreSolution {
    pub fn order(&self) -> usize {
        self.problem.structure.order()
    }

    pub fn gamma(&self) -> f64 {
        self.problem.gamma
    }

    /// Last row of `P`, i.e. `e_nᵀP`.
    pub fn last_row(&self) -> DVector<f64> {
        let n = self.order();
        self.p.row(n - 1).transpose()
    }

    /// `V(x) = xᵀPx`.
    pub fn lyapunov(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p * x))
    }

    pub fn q_lambda_min(&self) -> f64 {
        spectral_bounds(&self.problem.q)
            .map(|(lo, _)| lo)
            .unwrap_or(f64::NAN)
    }
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn spectral_bounds(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// `λ_min(Q) / (2(n−1) λ_max(P))`: every `α` strictly below it is admissible.
pub fn alpha_bound(solution: &AreSolution, q: &DMatrix<f64>, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::UndefinedForFirstOrder);
    }
    let (q_min, _) = spectral_bounds(q)?;
    Ok(q_min / (2.0 * (n as f64 - 1.0) * solution.lambda_max_p))
}

/// Solves the chain Riccati equation to Frobenius residual `tol`.
pub fn solve_are(problem: &AreProblem, tol: f64) -> Result<AreSolution> {
    let n = problem.structure.order();
    let gamma = problem.gamma;
    let a = problem.structure.jordan();
    let e = problem.structure.e_n();
    let s = gamma * &e * e.transpose();

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&problem.q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let h_scale = h.norm().max(1.0);
    // The unbounded Schur iteration can cycle on these Hamiltonians; when the
    // bounded one gives up, the sign iteration below still rejects
    // imaginary-axis spectra by failing to converge.
    let min_re = Schur::try_new(h.clone(), f64::EPSILON, 60 * n)
        .map(|schur| {
            schur
                .complex_eigenvalues()
                .iter()
                .map(|l| l.re.abs())
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(f64::INFINITY);
    if min_re <= 1e-9 * h_scale {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian has an eigenvalue on the imaginary axis (|Re| = {min_re:.3e})"
        )));
    }

    let sign = matrix_sign(&h)?;
    // (sign(H) + I) annihilates the stable subspace spanned by [I; P].
    let w11 = sign.view((0, 0), (n, n)) + DMatrix::<f64>::identity(n, n);
    let w12 = sign.view((0, n), (n, n)).into_owned();
    let w21 = sign.view((n, 0), (n, n)).into_owned();
    let w22 = sign.view((n, n), (n, n)) + DMatrix::<f64>::identity(n, n);

    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&w22);
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-w11));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));

    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NoStabilizingSolution(e.to_string()))?;
    let mut p = symmetrize(&p);

    let mut residual = problem.residual(&p);
    for step in 0..MAX_NEWTON_STEPS {
        if step > 0 && residual <= tol * 1e-2 {
            break;
        }
        let refined = match newton_step(problem, &p, &s) {
            Some(next) => next,
            None => break,
        };
        let r = problem.residual(&refined);
        if step > 0 && r >= residual {
            break;
        }
        p = refined;
        residual = r;
    }

    if !residual.is_finite() || residual > tol {
        return Err(Error::NonConvergence { residual, tol });
    }
    if p.clone().cholesky().is_none() {
        return Err(Error::NoStabilizingSolution(
            "solution is not positive definite".into(),
        ));
    }
    let (lambda_min_p, lambda_max_p) = spectral_bounds(&p)?;
    Ok(AreSolution {
        problem: problem.clone(),
        p,
        residual_norm: residual,
        lambda_min_p,
        lambda_max_p,
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Newton iteration for `sign(H)` with determinant scaling.
fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..MAX_SIGN_ITERS {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or_else(|| {
            Error::NoStabilizingSolution("singular iterate in sign iteration".into())
        })?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / dim)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if delta <= 1e-13 * scale {
            return Ok(z);
        }
    }
    Err(Error::NoStabilizingSolution(
        "sign iteration did not converge".into(),
    ))
}

/// One Kleinman step: solve `A_kᵀX + XA_k = −(Q + PSP)` with `A_k = J − SP`.
fn newton_step(problem: &AreProblem, p: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let a_k = problem.structure.jordan() - s * p;
    let rhs = -(&problem.q + p * s * p);
    solve_lyapunov(&a_k, &rhs).map(|x| symmetrize(&x))
}

/// Solves `AᵀX + XA = C` by vectorization (small `n` only).
pub(crate) fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // Column-major vec: vec(AᵀX) = (I ⊗ Aᵀ) vec X, vec(XA) = (Aᵀ ⊗ I) vec X.
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = k.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SQRT3: f64 = 1.732_050_807_568_877_2;

    #[test]
    fn scalar_case_is_sqrt_q_over_gamma() {
        let sol = solve_are(&AreProblem::identity(1, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.p[(0, 0)], 1.0, epsilon = 1e-12);
        let sol = solve_are(&AreProblem::diagonal(0.5, &[2.0]).unwrap(), DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.p[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn second_order_unit_gamma_matches_hand_solution() {
        // -p12² + 1 = 0, p11 - p12 p22 = 0, 2 p12 - p22² + 1 = 0.
        let p12: f64 = 1.0;
        let p22 = (2.0 * p12 + 1.0).sqrt();
        let p11 = p12 * p22;
        let sol = solve_are(&AreProblem::identity(2, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.p[(0, 0)], p11, epsilon = 1e-12);
        assert_relative_eq!(sol.p[(0, 1)], p12, epsilon = 1e-12);
        assert_relative_eq!(sol.p[(1, 0)], p12, epsilon = 1e-12);
        assert_relative_eq!(sol.p[(1, 1)], p22, epsilon = 1e-12);
        assert!(sol.residual_norm <= 1e-12);
    }

    #[test]
    fn small_gamma_residual_by_substitution() {
        let prob = AreProblem::identity(2, 0.1).unwrap();
        let sol = solve_are(&prob, DEFAULT_TOL).unwrap();
        // independent substitution into the equation entry by entry
        let p = &sol.p;
        let g = 0.1;
        let r11 = -g * p[(0, 1)] * p[(0, 1)] + 1.0;
        let r12 = p[(0, 0)] - g * p[(0, 1)] * p[(1, 1)];
        let r22 = 2.0 * p[(0, 1)] - g * p[(1, 1)] * p[(1, 1)] + 1.0;
        assert!(r11.abs() < 1e-9 && r12.abs() < 1e-9 && r22.abs() < 1e-9);
        assert!(sol.lambda_min_p > 0.0);
    }

    #[test]
    fn spectral_bounds_examples() {
        assert_eq!(
            spectral_bounds(&DMatrix::identity(2, 2)).unwrap(),
            (1.0, 1.0)
        );
        let (lo, hi) =
            spectral_bounds(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]))).unwrap();
        assert_relative_eq!(lo, 2.0);
        assert_relative_eq!(hi, 5.0);
        let p = DMatrix::from_row_slice(2, 2, &[SQRT3, 1.0, 1.0, SQRT3]);
        let (lo, hi) = spectral_bounds(&p).unwrap();
        assert_relative_eq!(lo, SQRT3 - 1.0, epsilon = 1e-12);
        assert_relative_eq!(hi, SQRT3 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_bounds_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            spectral_bounds(&m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn alpha_bound_examples() {
        let sol = solve_are(&AreProblem::identity(2, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        let a = alpha_bound(&sol, &DMatrix::identity(2, 2), 2).unwrap();
        assert_relative_eq!(a, 1.0 / (2.0 * (SQRT3 + 1.0)), epsilon = 1e-12);
        assert_relative_eq!(a, 0.183_012_701_892_219_3, epsilon = 1e-9);
        let a2 = alpha_bound(&sol, &(DMatrix::identity(2, 2) * 2.0), 2).unwrap();
        assert_relative_eq!(a2, 0.366_025_403_784_438_6, epsilon = 1e-9);
        let one = solve_are(&AreProblem::identity(1, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        assert_eq!(
            alpha_bound(&one, &DMatrix::identity(1, 1), 1),
            Err(Error::UndefinedForFirstOrder)
        );
    }

    #[test]
    fn gamma_interval_enforced() {
        assert!(AreProblem::identity(2, 0.0).is_err());
        assert!(AreProblem::identity(2, 1.7).is_err());
        assert!(AreProblem::identity(2, GAMMA_MAX).is_ok());
    }

    #[test]
    fn rejects_indefinite_q() {
        assert!(AreProblem::diagonal(1.0, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn lyapunov_solver_matches_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let c = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.5, -2.0]);
        let x = solve_lyapunov(&a, &c).unwrap();
        let r = a.transpose() * &x + &x * &a - c;
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn identity_q_is_best_normalized_ratio() {
        // Fixed finite family, each Q rescaled to lambda_max(Q) = 1 before solving.
        let ratio = |diag: &[f64]| {
            let top = diag.iter().cloned().fold(0.0, f64::max);
            let scaled: Vec<f64> = diag.iter().map(|d| d / top).collect();
            let sol = solve_are(&AreProblem::diagonal(1.0, &scaled).unwrap(), DEFAULT_TOL).unwrap();
            let (qmin, _) = spectral_bounds(&sol.problem.q).unwrap();
            qmin / sol.lambda_max_p
        };
        let at_identity = ratio(&[1.0, 1.0]);
        assert_relative_eq!(at_identity, 1.0 / (SQRT3 + 1.0), epsilon = 1e-12);
        for q in [[1.0, 2.0], [2.0, 1.0], [2.0, 2.0]] {
            assert!(at_identity >= ratio(&q) - 1e-12, "Q = {q:?}");
        }
    }
}
