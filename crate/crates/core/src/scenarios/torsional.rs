use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::quintic::QuinticTrajectory;
use crate::error::{Error, Result};
use crate::plant::{PerturbationSpec, PlantModel, Signal};
use crate::riccati::ChainStructure;

/// Torsional spring-damper with uncertain inertia.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorsionalParams {
    /// Spring constant.
    pub k: f64,
    /// True inertia.
    pub j: f64,
    /// Nominal inertia used by the controller.
    pub j_m: f64,
    pub b_damp: f64,
    /// Relative inertia uncertainty `δ_j(t)`.
    pub delta_j: Signal,
    /// External disturbance `φ(t)`.
    pub phi: Signal,
}

impl Default for TorsionalParams {
    fn default() -> Self {
        Self {
            k: 2.3375,
            j: 0.2946,
            j_m: 0.0333,
            b_damp: 0.012195,
            delta_j: Signal::sign_of_sine(0.75, 1.0),
            phi: Signal::cosine(1.0, 5.0),
        }
    }
}

impl TorsionalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.j_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "j_m = {} must be > 0",
                self.j_m
            )));
        }
        for (name, v) in [("k", self.k), ("j", self.j), ("b_damp", self.b_damp)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Default reference: 0 to 10 over `[0, 10]`.
    pub fn default_trajectory() -> QuinticTrajectory {
        QuinticTrajectory::new(0.0, 10.0, 0.0, 10.0).expect("valid default trajectory")
    }
}

/// Recovers the applied torque `v` from the chain input `u` by adding back
/// the spring and damper terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputReconstructor {
    pub k: f64,
    pub b_damp: f64,
    pub trajectory: QuinticTrajectory,
}

impl InputReconstructor {
    /// `(θ, θ̇)` from the error state at `t`.
    pub fn physical_state(&self, t: f64, x: &DVector<f64>) -> (f64, f64) {
        let (qd, vd, _) = self.trajectory.eval(t);
        (x[0] + qd, x[1] + vd)
    }

    /// `v = u + b θ̇ + k θ`.
    pub fn physical_input(&self, t: f64, x: &DVector<f64>, u: f64) -> f64 {
        let (theta, theta_dot) = self.physical_state(t, x);
        self.torque(theta, theta_dot, u)
    }

    /// `v = u + b θ̇ + k θ` at a physical state.
    pub fn torque(&self, theta: f64, theta_dot: f64, u: f64) -> f64 {
        u + self.b_damp * theta_dot + self.k * theta
    }

    /// Inverse of [`Self::physical_input`] at a physical state.
    pub fn chain_input(&self, theta: f64, theta_dot: f64, v: f64) -> f64 {
        v - self.b_damp * theta_dot - self.k * theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorsionalPlant {
    pub plant: PlantModel,
    pub reconstructor: InputReconstructor,
}

/// Error-coordinate chain `x = (θ − θ_d, θ̇ − θ̇_d)` with `b ≡ 1/j_m`,
/// `δ_b = δ_j` and `f = j (θ̈_d + φ)`.
pub fn torsional_error_plant(
    params: &TorsionalParams,
    traj: &QuinticTrajectory,
) -> Result<TorsionalPlant> {
    params.validate()?;
    let f = Signal::sum(vec![
        traj.acceleration_signal().scaled(params.j),
        params.phi.scaled(params.j),
    ]);
    let m = (params.j.abs() * (traj.max_abs_acceleration() + params.phi.sup_bound()))
        .max(f64::MIN_POSITIVE);
    let eps_b = params.delta_j.sup_bound();
    let perturbation = PerturbationSpec::new(f, params.delta_j.clone(), m, eps_b)?;
    let b = 1.0 / params.j_m;
    let plant = PlantModel::new(
        ChainStructure::new(2)?,
        Signal::constant(b),
        0.5 * b,
        perturbation,
    )?;
    Ok(TorsionalPlant {
        plant,
        reconstructor: InputReconstructor {
            k: params.k,
            b_damp: params.b_damp,
            trajectory: traj.clone(),
        },
    })
}

/// Second-order model in physical coordinates driven by the applied torque:
/// `θ̈ = (1 + δ_j)/j_m (v − b θ̇ − k θ) + j (θ̈_d + φ) + θ̈_d`.
/// Returns `(θ̇, θ̈)`.
pub fn physical_rhs(
    params: &TorsionalParams,
    traj: &QuinticTrajectory,
    t: f64,
    theta: f64,
    theta_dot: f64,
    v: f64,
) -> (f64, f64) {
    let (_, _, acc_d) = traj.eval(t);
    let drive = v - params.b_damp * theta_dot - params.k * theta;
    let acc = (1.0 + params.delta_j.eval(t)) / params.j_m * drive
        + params.j * (acc_d + params.phi.eval(t))
        + acc_d;
    (theta_dot, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn table_values_give_b() {
        let tp = torsional_error_plant(
            &TorsionalParams::default(),
            &TorsionalParams::default_trajectory(),
        )
        .unwrap();
        assert_relative_eq!(tp.plant.b_at(3.0), 30.03003003, max_relative = 1e-9);
        assert_eq!(tp.plant.perturbation.bound_eps_b(), 0.75);
    }

    #[test]
    fn constant_reference_adds_no_acceleration_term() {
        let params = TorsionalParams {
            delta_j: Signal::zero(),
            phi: Signal::zero(),
            ..TorsionalParams::default()
        };
        let traj = QuinticTrajectory::new(0.0, 10.0, 2.0, 2.0).unwrap();
        let tp = torsional_error_plant(&params, &traj).unwrap();
        for i in 0..100 {
            assert_eq!(tp.plant.perturbation.f.eval(0.13 * i as f64), 0.0);
        }
    }

    #[test]
    fn declared_m_covers_sampled_perturbation() {
        let tp = torsional_error_plant(
            &TorsionalParams::default(),
            &TorsionalParams::default_trajectory(),
        )
        .unwrap();
        tp.plant.perturbation.check_bounds(15.0, 200_001).unwrap();
        assert_relative_eq!(
            tp.plant.perturbation.bound_m(),
            0.2946 * (1.0 + 10.0 / 3f64.sqrt() / 10.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_zero_nominal_inertia() {
        let params = TorsionalParams {
            j_m: 0.0,
            ..TorsionalParams::default()
        };
        assert!(torsional_error_plant(&params, &TorsionalParams::default_trajectory()).is_err());
    }

    proptest! {
        #[test]
        fn physical_model_agrees_with_error_chain(
            t in 0.0f64..15.0,
            x1 in -10.0f64..10.0,
            x2 in -10.0f64..10.0,
            u in -50.0f64..50.0,
        ) {
            let params = TorsionalParams::default();
            let traj = TorsionalParams::default_trajectory();
            let tp = torsional_error_plant(&params, &traj).unwrap();
            let x = DVector::from_vec(vec![x1, x2]);
            let v = tp.reconstructor.physical_input(t, &x, u);
            let (theta, theta_dot) = tp.reconstructor.physical_state(t, &x);
            let (d1, d2) = physical_rhs(&params, &traj, t, theta, theta_dot, v);
            let (_, vd, ad) = traj.eval(t);
            let dx = tp.plant.rhs(t, &x, u).unwrap();
            prop_assert!((d1 - vd - dx[0]).abs() <= 1e-9 * (1.0 + dx[0].abs()));
            prop_assert!((d2 - ad - dx[1]).abs() <= 1e-9 * (1.0 + dx[1].abs()));
            prop_assert!((tp.reconstructor.chain_input(theta, theta_dot, v) - u).abs() <= 1e-9 * (1.0 + u.abs()));
        }
    }
}
