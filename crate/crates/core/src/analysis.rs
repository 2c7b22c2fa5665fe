//! Closed-form bounds and the scaled-time verification oracle.
//!
//! The reaching phase can be analysed in the coordinates `y = Ω(t)⁻¹x`
//! and the time `τ(t) = −(1/α) ln(1 − t/T)`, where the chain becomes
//! `y' = (J_n + α D_α) y + e_n κ^{−n} [b(1+δ_b)u + f]` with
//! `D_α = diag(0, −1, …, −(n−1))`. [`scaled_consistency_check`] maps a
//! recorded trace into these coordinates and measures how well it satisfies
//! that field, independently of the integrator that produced it.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{omega_inv_apply, ControllerParams, Mode};
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::riccati::{alpha_bound, spectral_bounds, AreSolution};
use crate::trace::Trace;

/// Ultimate-bound radius for the nominal law and its two ultimate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Bounds {
    pub mu: f64,
    /// `√(λ_min(P)/λ_max(P)) μ`, the form stated with the result.
    pub as_written: f64,
    /// `√(λ_max(P)/λ_min(P)) μ`, the classical ultimate-bound form.
    pub standard: f64,
}

/// `μ = 2Mλ_max(P)/(θλ_min(Q))` and both ultimate bounds.
pub fn prop1_bounds(
    m: f64,
    theta: f64,
    are: &AreSolution,
    q: &DMatrix<f64>,
) -> Result<Prop1Bounds> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta = {theta} must lie in (0, 1)"
        )));
    }
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("M = {m} must be > 0")));
    }
    let (q_min, _) = spectral_bounds(q)?;
    let mu = 2.0 * m * are.lambda_max_p / (theta * q_min);
    let ratio = are.lambda_min_p / are.lambda_max_p;
    Ok(Prop1Bounds {
        mu,
        as_written: ratio.sqrt() * mu,
        standard: mu / ratio.sqrt(),
    })
}

/// Time after which the redesigned law keeps `‖x‖ ≤ μ*`:
/// `(2λ_max(P)/λ_min(Q)) ln(√(λ_max(P)/λ_min(P)) ‖x₀‖/μ*)`.
pub fn prop2_reach_time(
    x0_norm: f64,
    mu_star: f64,
    are: &AreSolution,
    q: &DMatrix<f64>,
) -> Result<f64> {
    if !(mu_star > 0.0 && mu_star < x0_norm) {
        return Err(Error::InvalidTarget { mu_star, x0_norm });
    }
    let (q_min, _) = spectral_bounds(q)?;
    let cond = (are.lambda_max_p / are.lambda_min_p).sqrt();
    Ok(2.0 * are.lambda_max_p / q_min * (cond * x0_norm / mu_star).ln())
}

/// Inner level `σ₁ = Φ/(1+Φ) ε` with `Φ = M/(1−ε_b)`.
pub fn sigma1(m: f64, eps_b: f64, epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps_b) || m < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need M >= 0 and eps_b in [0, 1) (M = {m}, eps_b = {eps_b})"
        )));
    }
    let phi = m / (1.0 - eps_b);
    Ok(phi / (1.0 + phi) * epsilon)
}

/// Radius `R(ε) = √(ε/λ_min(P))` of the ball containing `{V < ε}`.
pub fn prescribed_radius(epsilon: f64, are: &AreSolution) -> f64 {
    (epsilon / are.lambda_min_p).sqrt()
}

/// `R²λ_min(P)`: any `ε` strictly below it keeps `‖x‖ < R`.
pub fn epsilon_for_radius(radius: f64, are: &AreSolution) -> f64 {
    radius * radius * are.lambda_min_p
}

/// `τ(t) = −(1/α) ln(1 − t/T)` for `0 ≤ t < T`.
pub fn time_scaling(t: f64, alpha: f64, t_final: f64) -> Result<f64> {
    if !(0.0..t_final).contains(&t) {
        return Err(Error::DomainError { t, t_final });
    }
    Ok(-(1.0 - t / t_final).ln() / alpha)
}

/// `t(τ) = T(1 − e^{−ατ})`.
pub fn inverse_time_scaling(tau: f64, alpha: f64, t_final: f64) -> f64 {
    -t_final * (-alpha * tau).exp_m1()
}

/// Everything reported by the `bounds` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m: f64,
    pub eps_b: f64,
    pub theta: f64,
    pub mu: f64,
    pub ultimate_bound_as_written: f64,
    pub ultimate_bound_standard: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_star_bar: Option<f64>,
    pub x0_norm: f64,
    pub mu_star: f64,
    pub epsilon: f64,
    pub sigma1: f64,
    pub r_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
}

/// Inputs for [`bound_report`].
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub m: f64,
    pub eps_b: f64,
    pub theta: f64,
    pub x0_norm: f64,
    pub mu_star: f64,
    pub epsilon: f64,
}

pub fn bound_report(are: &AreSolution, inputs: BoundInputs) -> Result<BoundReport> {
    let q = &are.problem.q;
    // M = 0 is allowed here: the ultimate bound then collapses to zero.
    let p1 = if inputs.m > 0.0 {
        prop1_bounds(inputs.m, inputs.theta, are, q)?
    } else {
        Prop1Bounds {
            mu: 0.0,
            as_written: 0.0,
            standard: 0.0,
        }
    };
    let t_star_bar = prop2_reach_time(inputs.x0_norm, inputs.mu_star, are, q).ok();
    let alpha_max = match alpha_bound(are, q, are.order()) {
        Ok(a) => Some(a),
        Err(Error::UndefinedForFirstOrder) => None,
        Err(e) => return Err(e),
    };
    Ok(BoundReport {
        m: inputs.m,
        eps_b: inputs.eps_b,
        theta: inputs.theta,
        mu: p1.mu,
        ultimate_bound_as_written: p1.as_written,
        ultimate_bound_standard: p1.standard,
        t_star_bar,
        x0_norm: inputs.x0_norm,
        mu_star: inputs.mu_star,
        epsilon: inputs.epsilon,
        sigma1: sigma1(inputs.m, inputs.eps_b, inputs.epsilon)?,
        r_eps: prescribed_radius(inputs.epsilon, are),
        alpha_max,
    })
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "\"n/a\"".to_string(), |v| format!("{v:.6e}"));
        writeln!(f, "M = {:.6e}", self.m)?;
        writeln!(f, "eps_b = {:.6e}", self.eps_b)?;
        writeln!(f, "theta = {:.6e}", self.theta)?;
        writeln!(f, "mu = {:.6e}", self.mu)?;
        writeln!(
            f,
            "ultimate_bound_standard = {:.6e}",
            self.ultimate_bound_standard
        )?;
        writeln!(
            f,
            "ultimate_bound_as_written = {:.6e}",
            self.ultimate_bound_as_written
        )?;
        writeln!(f, "x0_norm = {:.6e}", self.x0_norm)?;
        writeln!(f, "mu_star = {:.6e}", self.mu_star)?;
        writeln!(f, "t_star_bar = {}", opt(self.t_star_bar))?;
        writeln!(f, "epsilon = {:.6e}", self.epsilon)?;
        writeln!(f, "sigma1 = {:.6e}", self.sigma1)?;
        writeln!(f, "r_eps = {:.6e}", self.r_eps)?;
        writeln!(f, "alpha_max = {}", opt(self.alpha_max))
    }
}

/// The chain in scaled coordinates: `A = J_n + α D_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSystem {
    pub a: DMatrix<f64>,
    pub alpha: f64,
    pub t_final: f64,
}

impl ScaledSystem {
    pub fn new(n: usize, alpha: f64, t_final: f64) -> Self {
        let a = DMatrix::from_fn(n, n, |i, j| {
            if j == i + 1 {
                1.0
            } else if i == j {
                -alpha * i as f64
            } else {
                0.0
            }
        });
        Self { a, alpha, t_final }
    }

    /// `κ = 1/(α(T − t))` expressed at original time `t`.
    pub fn kappa(&self, t: f64) -> f64 {
        1.0 / (self.alpha * (self.t_final - t))
    }

    /// Scaled field `y' = Ay + e_n κ^{−n} w` where `w` is the matched input.
    pub fn field(&self, t: f64, y: &DVector<f64>, matched: f64) -> DVector<f64> {
        let n = y.len();
        let mut dy = &self.a * y;
        dy[n - 1] += self.kappa(t).powi(-(n as i32)) * matched;
        dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledConsistencyReport {
    pub samples: usize,
    pub max_residual: f64,
    pub max_abs_y: f64,
}

impl ScaledConsistencyReport {
    /// `max_residual / max|y|`.
    pub fn relative(&self) -> f64 {
        if self.max_abs_y > 0.0 {
            self.max_residual / self.max_abs_y
        } else {
            self.max_residual
        }
    }
}

/// Checks the reaching-phase rows of a trace against the scaled-time field.
///
/// Each row maps to `y_k = Ω(t_k)⁻¹x_k` at `τ_k = τ(t_k)`; the derivative is
/// estimated by the forward difference to the next row and compared with
/// the field evaluated at the recorded `u`. A forward difference matches
/// the Euler update, so the residual is the error of the coordinate change
/// alone and shrinks linearly with the step even when `u` chatters.
pub fn scaled_consistency_check(
    trace: &Trace,
    params: &ControllerParams,
    plant: &PlantModel,
) -> Result<ScaledConsistencyReport> {
    if trace.meta.config.record_stride != 1 {
        return Err(Error::InvalidParameter(
            "scaled consistency needs every step recorded (record_stride = 1)".into(),
        ));
    }
    let rows: Vec<_> = trace
        .rows
        .iter()
        .filter(|r| r.mode == Mode::Reaching && r.t < params.t_final)
        .collect();
    if rows.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            have: rows.len(),
        });
    }
    let sys = ScaledSystem::new(trace.n, params.alpha, params.t_final);
    let mut taus = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for r in &rows {
        taus.push(time_scaling(r.t, params.alpha, params.t_final)?);
        ys.push(omega_inv_apply(
            sys.kappa(r.t),
            &DVector::from_column_slice(&r.x),
        ));
    }

    let mut max_residual: f64 = 0.0;
    let mut max_abs_y: f64 = 0.0;
    for k in 0..rows.len() - 1 {
        let (lo, hi) = (k, k + 1);
        let dy = (&ys[hi] - &ys[lo]) / (taus[hi] - taus[lo]);
        let r = rows[k];
        let matched = plant.input_gain(r.t) * r.u + plant.perturbation.f.eval(r.t);
        let field = sys.field(r.t, &ys[k], matched);
        max_residual = max_residual.max((dy - field).amax());
        max_abs_y = max_abs_y.max(ys[k].amax());
    }
    Ok(ScaledConsistencyReport {
        samples: rows.len(),
        max_residual,
        max_abs_y,
    })
}
