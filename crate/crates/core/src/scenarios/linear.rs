use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-input linear plant `ż = A z + B τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `[B AB … Aⁿ⁻¹B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut c = DMatrix::zeros(n, n);
        let mut col = self.b.clone();
        for j in 0..n {
            c.set_column(j, &col);
            col = &self.a * col;
        }
        c
    }

    /// Numerical rank of the controllability matrix.
    pub fn controllability_rank(&self) -> usize {
        let sv = self.controllability_matrix().singular_values();
        let top = sv.max();
        if top == 0.0 {
            return 0;
        }
        let tol = top * self.order() as f64 * 1e-12;
        sv.iter().filter(|s| **s > tol).count()
    }

    /// Characteristic polynomial coefficients `[a₀, …, aₙ₋₁, 1]` of
    /// `det(λI − A)`, lowest degree first.
    pub fn characteristic_polynomial(&self) -> Vec<f64> {
        characteristic_polynomial(&self.a)
    }
}

/// Faddeev–LeVerrier recursion. Fine for the small orders used here.
pub fn characteristic_polynomial(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[n - k + 1];
        coeffs[n - k] = -(a * &m).trace() / k as f64;
    }
    coeffs
}

/// Hankel matrix built from `a₁ … aₙ₋₁` and a trailing 1 on the
/// anti-diagonal, zeros below it.
pub fn hankel_from_charpoly(coeffs: &[f64]) -> DMatrix<f64> {
    let n = coeffs.len() - 1;
    DMatrix::from_fn(n, n, |i, j| {
        let k = i + j + 1;
        if k < n {
            coeffs[k]
        } else if k == n {
            1.0
        } else {
            0.0
        }
    })
}

/// Controller-form change of coordinates `z = W x`.
///
/// In `x` the pair becomes `(W⁻¹AW, W⁻¹B) = (J + e_n cᵀ, e_n)` where
/// `c = −[a₀ … aₙ₋₁]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerForm {
    pub w: DMatrix<f64>,
    pub w_inv: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Last row of the transformed `A`.
    pub coefficient_row: DVector<f64>,
}

impl ControllerForm {
    /// `x = W⁻¹ z`.
    pub fn to_chain(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.w_inv * z
    }

    /// `z = W x`.
    pub fn to_physical(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x
    }

    /// Largest entry-wise deviation of the transformed `A` from the shift
    /// structure in rows `0..n−1`, and of the transformed `B` from `e_n`.
    pub fn structural_residual(&self) -> (f64, f64) {
        let n = self.a.nrows();
        let mut ra = 0.0_f64;
        for i in 0..n - 1 {
            for j in 0..n {
                let want = if j == i + 1 { 1.0 } else { 0.0 };
                ra = ra.max((self.a[(i, j)] - want).abs());
            }
        }
        let rb = (0..n)
            .map(|i| (self.b[i] - if i + 1 == n { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        (ra, rb)
    }
}

/// Builds `W = [B AB … Aⁿ⁻¹B] H_k` and conjugates the pair.
pub fn controller_form_transform(plant: &LinearPlant) -> Result<ControllerForm> {
    let n = plant.order();
    let rank = plant.controllability_rank();
    if rank < n {
        return Err(Error::Uncontrollable { rank, n });
    }
    let coeffs = plant.characteristic_polynomial();
    let w = plant.controllability_matrix() * hankel_from_charpoly(&coeffs);
    let lu = w.clone().lu();
    let w_inv = lu
        .try_inverse()
        .ok_or(Error::Uncontrollable { rank: n - 1, n })?;
    let a = &w_inv * &plant.a * &w;
    let b = &w_inv * &plant.b;
    let coefficient_row = a.row(n - 1).transpose();
    Ok(ControllerForm {
        w,
        w_inv,
        a,
        b,
        coefficient_row,
    })
}
