//! Control laws.
//!
//! All laws share the manifold `u₀ = γ̃ e_nᵀ P Ω⁻¹ x` with
//! `γ̃ = ½(1/γ + 1)`:
//!
//! * nominal linear feedback `u = −γ̃ b⁻¹ e_nᵀPx`;
//! * redesigned feedback with a fixed discontinuous gain `ρ`;
//! * the combined switching law
//!   `u = −b⁻¹ [κⁿ u₀ + Λ sign(u₀)]`, which runs a time-varying gain
//!   `κ = 1/(α(T − t))` with an integrated adaptive gain `Γ` until `V = xᵀPx`
//!   first drops to `ε/2`, then switches to `κ = 1` and the barrier gain
//!   `Λ = V/(ε − V)`.
//!
//! The controller only ever sees `b(t)` values, never perturbation bounds.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::sign;
use crate::riccati::{alpha_bound, AreSolution, GAMMA_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Reaching,
    Barrier,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Reaching => "reaching",
            Mode::Barrier => "barrier",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reaching" => Ok(Mode::Reaching),
            "barrier" => Ok(Mode::Barrier),
            other => Err(Error::Parse(format!("unknown mode '{other}'"))),
        }
    }
}

/// Design parameters of the combined law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub alpha: f64,
    /// Predefined reaching-time bound `T`.
    pub t_final: f64,
    /// Barrier width `ε`, in units of `V`.
    pub epsilon: f64,
    pub are: AreSolution,
}

impl ControllerParams {
    /// Validates `T, ε > 0`, `γ` in range, and `α` below the admissible bound.
    pub fn new(alpha: f64, t_final: f64, epsilon: f64, are: AreSolution) -> Result<Self> {
        let params = Self::new_unchecked_alpha(alpha, t_final, epsilon, are)?;
        if let Some(bound) = params.alpha_bound()? {
            if alpha >= bound {
                return Err(Error::InvalidParameter(format!(
                    "alpha = {alpha} violates alpha < lambda_min(Q)/(2(n-1)lambda_max(P)) = {bound:.6e}"
                )));
            }
        }
        Ok(params)
    }

    /// Same checks as [`Self::new`] except the bound on `α`. For
    /// reproducing published gain sets that exceed it; the reaching-time
    /// guarantee is then void and the run may end in
    /// [`Error::SingularityReached`].
    pub fn new_unchecked_alpha(
        alpha: f64,
        t_final: f64,
        epsilon: f64,
        are: AreSolution,
    ) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "T = {t_final} must be > 0"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {epsilon} must be > 0"
            )));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} must be > 0"
            )));
        }
        let gamma = are.gamma();
        if !(gamma > 0.0 && gamma <= GAMMA_MAX + 1e-15) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} outside (0, (1+sqrt 5)/2]"
            )));
        }
        Ok(Self {
            alpha,
            t_final,
            epsilon,
            are,
        })
    }

    /// Admissible upper bound on `α` (`None` for `n = 1`).
    pub fn alpha_bound(&self) -> Result<Option<f64>> {
        let n = self.are.order();
        if n < 2 {
            return Ok(None);
        }
        alpha_bound(&self.are, &self.are.problem.q, n).map(Some)
    }

    pub fn satisfies_alpha_bound(&self) -> Result<bool> {
        Ok(self.alpha_bound()?.is_none_or(|b| self.alpha < b))
    }

    pub fn order(&self) -> usize {
        self.are.order()
    }

    pub fn gamma(&self) -> f64 {
        self.are.gamma()
    }

    pub fn gamma_tilde(&self) -> f64 {
        gamma_tilde(self.gamma())
    }
}

/// `γ̃ = ½(1/γ + 1)`.
pub fn gamma_tilde(gamma: f64) -> f64 {
    0.5 * (1.0 / gamma + 1.0)
}

/// Runtime state of the combined law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Adaptive gain `Γ`.
    pub gain: f64,
    pub mode: Mode,
    /// First switch instant.
    pub t1: Option<f64>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl ControllerState {
    pub fn new(initial_gain: f64) -> Self {
        Self {
            gain: initial_gain,
            mode: Mode::Reaching,
            t1: None,
        }
    }

    /// Switches to the barrier phase at `t` if still reaching and
    /// `V ≤ ε/2`. Returns whether a switch happened.
    pub fn observe(&mut self, t: f64, v: f64, epsilon: f64) -> bool {
        if self.mode == Mode::Reaching && v <= 0.5 * epsilon {
            self.mode = Mode::Barrier;
            self.t1 = Some(t);
            true
        } else {
            false
        }
    }
}

/// Everything the combined law computed at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub u: f64,
    pub u0: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub v: f64,
    pub mode: Mode,
}

impl ControlOutput {
    /// Recomputes `u` from the reported components.
    pub fn reassemble(&self, b_t: f64, n: usize) -> f64 {
        -(self.kappa.powi(n as i32) * self.u0 + self.lambda * sign(self.u0)) / b_t
    }
}

/// `κ(t)`: `1/(α(T − t))` while reaching, `1` in the barrier phase.
pub fn kappa(t: f64, params: &ControllerParams, mode: Mode) -> Result<f64> {
    match mode {
        Mode::Barrier => Ok(1.0),
        Mode::Reaching => {
            if t >= params.t_final {
                return Err(Error::SingularityReached {
                    t,
                    t_final: params.t_final,
                });
            }
            Ok(1.0 / (params.alpha * (params.t_final - t)))
        }
    }
}

/// `Ω⁻¹ x` with `Ω = diag(1, κ, …, κⁿ⁻¹)`.
pub fn omega_inv_apply(kappa: f64, x: &DVector<f64>) -> DVector<f64> {
    let inv = 1.0 / kappa;
    let mut scale = 1.0;
    let mut y = x.clone();
    for yi in y.iter_mut() {
        *yi *= scale;
        scale *= inv;
    }
    y
}

/// Raw manifold `e_nᵀ P Ω⁻¹ x` at a given `κ`.
fn raw_manifold(are: &AreSolution, kappa: f64, x: &DVector<f64>) -> f64 {
    are.last_row().dot(&omega_inv_apply(kappa, x))
}

/// `u₀ = γ̃ e_nᵀ P Ω⁻¹ x`.
pub fn u0(t: f64, x: &DVector<f64>, params: &ControllerParams, mode: Mode) -> Result<f64> {
    let k = kappa(t, params, mode)?;
    Ok(params.gamma_tilde() * raw_manifold(&params.are, k, x))
}

/// Adaptation rate `Γ̇ = |e_nᵀ P Ω⁻¹ x| κ^{1−n}` (reaching phase).
pub fn gamma_dot(t: f64, x: &DVector<f64>, params: &ControllerParams) -> Result<f64> {
    let k = kappa(t, params, Mode::Reaching)?;
    let n = params.order() as i32;
    Ok(raw_manifold(&params.are, k, x).abs() * k.powi(1 - n))
}

/// Barrier gain `V/(ε − V)`, defined for `V < ε`.
pub fn barrier_gain(v: f64, epsilon: f64) -> Result<f64> {
    if v >= epsilon || !v.is_finite() {
        return Err(Error::BarrierViolated {
            t: f64::NAN,
            v,
            epsilon,
        });
    }
    Ok(v / (epsilon - v))
}

/// Combined switching law at `(t, x)` for the given state.
///
/// The returned flag is raised when the state is still reaching but
/// `V ≤ ε/2`; the caller decides when to commit the switch.
pub fn combined_control(
    t: f64,
    x: &DVector<f64>,
    b_t: f64,
    params: &ControllerParams,
    state: &ControllerState,
) -> Result<(ControlOutput, bool)> {
    let are = &params.are;
    let n = params.order();
    let v = are.lyapunov(x);
    let k = kappa(t, params, state.mode)?;
    let u0 = params.gamma_tilde() * raw_manifold(are, k, x);
    let lambda = match state.mode {
        Mode::Reaching => state.gain,
        Mode::Barrier => barrier_gain(v, params.epsilon).map_err(|e| match e {
            Error::BarrierViolated { v, epsilon, .. } => Error::BarrierViolated { t, v, epsilon },
            other => other,
        })?,
    };
    let u = -(k.powi(n as i32) * u0 + lambda * sign(u0)) / b_t;
    let hint = state.mode == Mode::Reaching && v <= 0.5 * params.epsilon;
    Ok((
        ControlOutput {
            u,
            u0,
            lambda,
            kappa: k,
            v,
            mode: state.mode,
        },
        hint,
    ))
}

/// Nominal linear feedback `u = −γ̃ b⁻¹ e_nᵀPx`.
pub fn nominal_control(x: &DVector<f64>, b_t: f64, are: &AreSolution) -> f64 {
    -gamma_tilde(are.gamma()) * are.last_row().dot(x) / b_t
}

/// Nominal feedback plus `−ρ b⁻¹ sign(γ̃ e_nᵀPx)`.
pub fn redesigned_control(x: &DVector<f64>, b_t: f64, are: &AreSolution, rho: f64) -> f64 {
    let manifold = gamma_tilde(are.gamma()) * are.last_row().dot(x);
    -(manifold + rho * sign(manifold)) / b_t
}

/// Feedback law driven by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ControlLaw {
    Combined(ControllerParams),
    Nominal { are: AreSolution },
    Redesigned { are: AreSolution, rho: f64 },
}

impl ControlLaw {
    pub fn are(&self) -> &AreSolution {
        match self {
            ControlLaw::Combined(p) => &p.are,
            ControlLaw::Nominal { are } | ControlLaw::Redesigned { are, .. } => are,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControlLaw::Combined(_) => "combined",
            ControlLaw::Nominal { .. } => "nominal",
            ControlLaw::Redesigned { .. } => "redesigned",
        }
    }

    /// Evaluates the law. Fixed-gain laws report `κ = 1`, `Λ = ρ` (or 0)
    /// and stay in `Reaching` (they never switch).
    pub fn evaluate(
        &self,
        t: f64,
        x: &DVector<f64>,
        b_t: f64,
        state: &ControllerState,
    ) -> Result<(ControlOutput, bool)> {
        match self {
            ControlLaw::Combined(params) => combined_control(t, x, b_t, params, state),
            ControlLaw::Nominal { are } => Ok((
                ControlOutput {
                    u: nominal_control(x, b_t, are),
                    u0: gamma_tilde(are.gamma()) * are.last_row().dot(x),
                    lambda: 0.0,
                    kappa: 1.0,
                    v: are.lyapunov(x),
                    mode: Mode::Reaching,
                },
                false,
            )),
            ControlLaw::Redesigned { are, rho } => Ok((
                ControlOutput {
                    u: redesigned_control(x, b_t, are, *rho),
                    u0: gamma_tilde(are.gamma()) * are.last_row().dot(x),
                    lambda: *rho,
                    kappa: 1.0,
                    v: are.lyapunov(x),
                    mode: Mode::Reaching,
                },
                false,
            )),
        }
    }

    /// Adaptive-gain rate for the current state (zero outside reaching).
    pub fn gain_rate(&self, t: f64, x: &DVector<f64>, state: &ControllerState) -> Result<f64> {
        match (self, state.mode) {
            (ControlLaw::Combined(params), Mode::Reaching) => gamma_dot(t, x, params),
            _ => Ok(0.0),
        }
    }
}
