//! Rotary inverted pendulum linearized about the upright equilibrium.
//!
//! State `z = (θ_r, θ_p, θ̇_r, θ̇_p)`: arm angle, pendulum angle and their
//! rates. The input is the arm torque, produced by a geared DC motor driven
//! with a saturated voltage.
//!
//! The default physical constants are placeholder values for a
//! Quanser-class rotary pendulum (SRV02 servo with a 33.7 cm pendulum).
//! They come from vendor-style data sheets and are not identified from any
//! particular rig.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::{controller_form_transform, ControllerForm, LinearPlant};
use crate::error::{Error, Result};
use crate::plant::{PerturbationSpec, PlantModel, Signal};
use crate::riccati::ChainStructure;
use crate::sim::Actuator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Gearbox efficiency.
    pub eta_g: f64,
    /// Gear ratio.
    pub k_g: f64,
    /// Motor efficiency.
    pub eta_m: f64,
    /// Torque constant.
    pub k_t: f64,
    /// Back-EMF constant.
    pub k_m: f64,
    /// Armature resistance.
    pub r_m: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            eta_g: 0.9,
            k_g: 70.0,
            eta_m: 0.69,
            k_t: 7.68e-3,
            k_m: 7.68e-3,
            r_m: 2.6,
        }
    }
}

impl MotorParams {
    /// Torque per volt at standstill, `η_g K_g η_m k_t / R_m`.
    pub fn torque_gain(&self) -> f64 {
        self.eta_g * self.k_g * self.eta_m * self.k_t / self.r_m
    }

    /// Back-EMF voltage per unit arm rate, `K_g k_m`.
    pub fn back_emf(&self) -> f64 {
        self.k_g * self.k_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurutaParams {
    pub m_p: f64,
    pub l_p: f64,
    pub l_r: f64,
    pub j_p: f64,
    pub j_r: f64,
    pub g: f64,
    pub motor: MotorParams,
    /// Pre-feedback gain on the third chain coordinate.
    pub tau_n: f64,
    /// Voltage limit (symmetric).
    pub u_sat: f64,
}

impl Default for FurutaParams {
    fn default() -> Self {
        Self {
            m_p: 0.127,
            l_p: 0.337,
            l_r: 0.216,
            j_p: 0.0012,
            j_r: 0.002,
            g: 9.81,
            motor: MotorParams::default(),
            tau_n: 0.1112,
            u_sat: 10.0,
        }
    }
}

impl FurutaParams {
    /// `J_T = J_p m_p L_r² + J_r J_p + ¼ J_r m_p L_p²`.
    pub fn j_t(&self) -> f64 {
        self.j_p * self.m_p * self.l_r.powi(2)
            + self.j_r * self.j_p
            + 0.25 * self.j_r * self.m_p * self.l_p.powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.motor;
        let positive = [
            ("m_p", self.m_p),
            ("l_p", self.l_p),
            ("l_r", self.l_r),
            ("j_p", self.j_p),
            ("j_r", self.j_r),
            ("eta_g", m.eta_g),
            ("k_g", m.k_g),
            ("eta_m", m.eta_m),
            ("k_t", m.k_t),
            ("k_m", m.k_m),
            ("r_m", m.r_m),
            ("tau_n", self.tau_n),
            ("u_sat", self.u_sat),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.g >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "g = {} must be >= 0",
                self.g
            )));
        }
        Ok(())
    }
}

/// Linearization about the upright equilibrium.
pub fn furuta_linearize(params: &FurutaParams) -> Result<LinearPlant> {
    params.validate()?;
    let p = params;
    let jt = p.j_t();
    let mut a = DMatrix::zeros(4, 4);
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    a[(2, 1)] = 0.25 * p.m_p * p.l_p.powi(2) * p.l_r * p.g / jt;
    a[(3, 1)] = 0.5 * p.m_p * p.l_p * p.g * (p.j_r + p.m_p * p.l_r.powi(2)) / jt;
    let b = DVector::from_vec(vec![
        0.0,
        0.0,
        (p.j_p + 0.25 * p.m_p * p.l_p.powi(2)) / jt,
        0.5 * p.m_p * p.l_p * p.l_r / jt,
    ]);
    LinearPlant::new(a, b)
}

/// Unsaturated voltage for a desired torque at arm rate `θ̇_r`.
pub fn voltage_for_torque(motor: &MotorParams, tau: f64, theta_r_dot: f64) -> f64 {
    tau / motor.torque_gain() + motor.back_emf() * theta_r_dot
}

/// `V_m` for a desired torque, clipped to `[−u_sat, u_sat]`.
pub fn torque_voltage(params: &FurutaParams, tau: f64, theta_r_dot: f64) -> f64 {
    voltage_for_torque(&params.motor, tau, theta_r_dot).clamp(-params.u_sat, params.u_sat)
}

/// Torque produced by voltage `v_m` at arm rate `θ̇_r`.
pub fn voltage_torque(motor: &MotorParams, v_m: f64, theta_r_dot: f64) -> f64 {
    motor.torque_gain() * (v_m - motor.back_emf() * theta_r_dot)
}

/// The pendulum as a 4-chain.
///
/// The controller-form transform is rescaled by `s = τ_n / a`, where `a`
/// is the coefficient of the third chain coordinate in the last row, so
/// that the pre-feedback `τ = −τ_n x₃ + u` cancels that coefficient
/// exactly. The chain then has constant `b = 1/s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurutaPlant {
    pub params: FurutaParams,
    pub linear: LinearPlant,
    /// Unscaled controller form.
    pub form: ControllerForm,
    pub scale: f64,
    pub plant: PlantModel,
}

impl FurutaPlant {
    pub fn b(&self) -> f64 {
        1.0 / self.scale
    }

    /// `x = (s W)⁻¹ z`.
    pub fn to_chain(&self, z: &DVector<f64>) -> DVector<f64> {
        self.form.to_chain(z) / self.scale
    }

    /// `z = s W x`.
    pub fn to_physical(&self, x: &DVector<f64>) -> DVector<f64> {
        self.form.to_physical(x) * self.scale
    }

    /// Chain state for the pendulum released at angle `theta_p0` with
    /// everything else at rest.
    pub fn initial_state(&self, theta_p0: f64) -> DVector<f64> {
        self.to_chain(&DVector::from_vec(vec![0.0, theta_p0, 0.0, 0.0]))
    }

    /// Torque requested by chain input `u`.
    pub fn requested_torque(&self, x: &DVector<f64>, u: f64) -> f64 {
        u - self.params.tau_n * x[2]
    }

    /// `(requested, applied)` motor voltage for chain input `u`.
    pub fn voltage(&self, x: &DVector<f64>, u: f64) -> (f64, f64) {
        let rate = self.to_physical(x)[2];
        let want = voltage_for_torque(&self.params.motor, self.requested_torque(x, u), rate);
        (want, want.clamp(-self.params.u_sat, self.params.u_sat))
    }

    pub fn saturated(&self, x: &DVector<f64>, u: f64) -> bool {
        self.voltage(x, u).0.abs() > self.params.u_sat
    }
}

impl Actuator for FurutaPlant {
    fn apply(&self, _t: f64, x: &DVector<f64>, u: f64) -> f64 {
        let rate = self.to_physical(x)[2];
        let (_, v_m) = self.voltage(x, u);
        voltage_torque(&self.params.motor, v_m, rate) + self.params.tau_n * x[2]
    }
}

/// Reduces the linearized pendulum to an unperturbed 4-chain.
pub fn furuta_closed_loop_plant(params: &FurutaParams) -> Result<FurutaPlant> {
    let linear = furuta_linearize(params)?;
    let form = controller_form_transform(&linear)?;
    let row = &form.coefficient_row;
    let a = row[2];
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "third chain coefficient {a} must be > 0 to absorb the pre-feedback"
        )));
    }
    let stray = [row[0], row[1], row[3]]
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if stray > 1e-9 * a {
        return Err(Error::InvalidParameter(format!(
            "last chain row has coefficients {row:?} outside the third entry"
        )));
    }
    let scale = params.tau_n / a;
    let b = 1.0 / scale;
    let plant = PlantModel::new(
        ChainStructure::new(4)?,
        Signal::constant(b),
        0.5 * b,
        PerturbationSpec::none(),
    )?;
    Ok(FurutaPlant {
        params: params.clone(),
        linear,
        form,
        scale,
        plant,
    })
}
