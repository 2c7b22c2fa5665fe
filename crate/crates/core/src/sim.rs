//! Fixed-step closed-loop simulation of the chain with the adaptive gain
//! integrated alongside the plant state.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::{ControlLaw, ControlOutput, ControllerState, Mode};
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::trace::{Trace, TraceMeta, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl SimConfig {
    pub fn euler(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            method: Method::Euler,
            record_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > self.dt) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt < t_end (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Plant state plus adaptive gain.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: DVector<f64>,
    pub gain: f64,
}

/// Maps the commanded input to the input that actually reaches the chain
/// (saturation, actuator conversion).
pub trait Actuator {
    fn apply(&self, t: f64, x: &DVector<f64>, u: f64) -> f64;
}

/// Pass-through actuator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Direct;

impl Actuator for Direct {
    fn apply(&self, _t: f64, _x: &DVector<f64>, u: f64) -> f64 {
        u
    }
}

/// Simulation error together with the trace recorded up to the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("simulation failed: {error}")]
pub struct SimFailure {
    #[source]
    pub error: Error,
    pub trace: Box<Trace>,
}

struct Field<'a> {
    plant: &'a PlantModel,
    law: &'a ControlLaw,
    actuator: &'a dyn Actuator,
}

impl Field<'_> {
    fn eval(
        &self,
        t: f64,
        s: &AugmentedState,
        ctrl: &ControllerState,
    ) -> Result<(DVector<f64>, f64)> {
        let st = ControllerState {
            gain: s.gain,
            ..ctrl.clone()
        };
        let (out, _) = self.law.evaluate(t, &s.x, self.plant.b_at(t), &st)?;
        self.eval_with(t, s, &st, &out)
    }

    fn eval_with(
        &self,
        t: f64,
        s: &AugmentedState,
        ctrl: &ControllerState,
        out: &ControlOutput,
    ) -> Result<(DVector<f64>, f64)> {
        let u = self.actuator.apply(t, &s.x, out.u);
        let dx = self.plant.rhs(t, &s.x, u)?;
        let dg = self.law.gain_rate(t, &s.x, ctrl)?;
        Ok((dx, dg))
    }

    fn advance(
        &self,
        s: &AugmentedState,
        ctrl: &ControllerState,
        t: f64,
        dt: f64,
        method: Method,
        first: Option<&ControlOutput>,
    ) -> Result<AugmentedState> {
        let k1 = match first {
            Some(out) => self.eval_with(t, s, ctrl, out)?,
            None => self.eval(t, s, ctrl)?,
        };
        match method {
            Method::Euler => Ok(AugmentedState {
                x: &s.x + &k1.0 * dt,
                gain: s.gain + dt * k1.1,
            }),
            Method::Rk4 => {
                let shifted = |k: &(DVector<f64>, f64), h: f64| AugmentedState {
                    x: &s.x + &k.0 * h,
                    gain: s.gain + h * k.1,
                };
                let k2 = self.eval(t + 0.5 * dt, &shifted(&k1, 0.5 * dt), ctrl)?;
                let k3 = self.eval(t + 0.5 * dt, &shifted(&k2, 0.5 * dt), ctrl)?;
                let k4 = self.eval(t + dt, &shifted(&k3, dt), ctrl)?;
                Ok(AugmentedState {
                    x: &s.x + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * (dt / 6.0),
                    gain: s.gain + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
                })
            }
        }
    }
}

/// One integration step of the augmented closed loop. The controller mode is
/// held fixed across the step.
#[allow(clippy::too_many_arguments)]
pub fn step(
    plant: &PlantModel,
    law: &ControlLaw,
    state: &AugmentedState,
    ctrl: &ControllerState,
    t: f64,
    dt: f64,
    method: Method,
    actuator: &dyn Actuator,
) -> Result<AugmentedState> {
    Field {
        plant,
        law,
        actuator,
    }
    .advance(state, ctrl, t, dt, method, None)
}

/// Runs the closed loop from `x0` with `Γ(0) = 0`.
pub fn simulate(
    plant: &PlantModel,
    law: &ControlLaw,
    x0: &DVector<f64>,
    config: &SimConfig,
) -> std::result::Result<Trace, SimFailure> {
    simulate_with(plant, law, x0, config, 0.0, &Direct)
}

/// Runs the closed loop with an explicit initial gain and actuator.
pub fn simulate_with(
    plant: &PlantModel,
    law: &ControlLaw,
    x0: &DVector<f64>,
    config: &SimConfig,
    initial_gain: f64,
    actuator: &dyn Actuator,
) -> std::result::Result<Trace, SimFailure> {
    let n = plant.order();
    let mut trace = Trace::new(n, TraceMeta::new(plant, law, config));
    let fail = |error: Error, trace: Trace| SimFailure {
        error,
        trace: Box::new(trace),
    };

    if let Err(e) = config.validate() {
        return Err(fail(e, trace));
    }
    if law.are().order() != n || x0.len() != n {
        let got = if x0.len() != n {
            x0.len()
        } else {
            law.are().order()
        };
        return Err(fail(Error::DimensionMismatch { expected: n, got }, trace));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(fail(
            Error::InvalidParameter("initial state must be finite".into()),
            trace,
        ));
    }

    let field = Field {
        plant,
        law,
        actuator,
    };
    let epsilon = match law {
        ControlLaw::Combined(p) => Some(p.epsilon),
        _ => None,
    };
    let mut s = AugmentedState {
        x: x0.clone(),
        gain: initial_gain,
    };
    let mut ctrl = ControllerState::new(initial_gain);
    let steps = config.steps();

    for k in 0..=steps {
        let t = k as f64 * config.dt;
        ctrl.gain = s.gain;
        if let Some(eps) = epsilon {
            if ctrl.observe(t, law.are().lyapunov(&s.x), eps) {
                trace.meta.t1 = Some(t);
            }
        }
        let out = match law.evaluate(t, &s.x, plant.b_at(t), &ctrl) {
            Ok((out, _)) => out,
            Err(e) => return Err(fail(e, trace)),
        };
        if k % config.record_stride == 0 {
            trace.push(TraceRow {
                t,
                x: s.x.iter().copied().collect(),
                u: out.u,
                v: out.v,
                lambda: out.lambda,
                kappa: out.kappa,
                gain: s.gain,
                mode: out.mode,
            });
        }
        if k == steps {
            break;
        }
        match field.advance(&s, &ctrl, t, config.dt, config.method, Some(&out)) {
            Ok(next) => s = next,
            Err(e) => return Err(fail(e, trace)),
        }
        if s.x.iter().any(|v| !v.is_finite()) || !law.are().lyapunov(&s.x).is_finite() {
            return Err(fail(Error::Diverged { t: t + config.dt }, trace));
        }
    }
    debug_assert!(ctrl.mode == Mode::Barrier || trace.meta.t1.is_none());
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerParams;
    use crate::plant::{PerturbationSpec, Signal};
    use crate::riccati::{solve_are, AreProblem, DEFAULT_TOL};
    use approx::assert_relative_eq;

    struct Zero;
    impl Actuator for Zero {
        fn apply(&self, _t: f64, _x: &DVector<f64>, _u: f64) -> f64 {
            0.0
        }
    }

    fn chain2() -> PlantModel {
        PlantModel::with_constant_b(2, 1.0, PerturbationSpec::none()).unwrap()
    }

    fn nominal() -> ControlLaw {
        ControlLaw::Nominal {
            are: solve_are(&AreProblem::identity(2, 1.0).unwrap(), DEFAULT_TOL).unwrap(),
        }
    }

    #[test]
    fn euler_step_with_zero_input() {
        let s = AugmentedState {
            x: DVector::from_vec(vec![1.0, 2.0]),
            gain: 0.0,
        };
        let next = step(
            &chain2(),
            &nominal(),
            &s,
            &ControllerState::default(),
            0.0,
            0.1,
            Method::Euler,
            &Zero,
        )
        .unwrap();
        assert_relative_eq!(next.x[0], 1.2, epsilon = 1e-15);
        assert_eq!(next.x[1], 2.0);
    }

    #[test]
    fn gain_integrates_its_rate() {
        // For n = 1 the rate is |P x| = |x| when P = 1; hold x at 1 with zero input.
        let plant = PlantModel::with_constant_b(1, 1.0, PerturbationSpec::none()).unwrap();
        let are = solve_are(&AreProblem::identity(1, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        let law = ControlLaw::Combined(ControllerParams::new(0.5, 2.0, 0.01, are).unwrap());
        let s = AugmentedState {
            x: DVector::from_vec(vec![1.0]),
            gain: 0.25,
        };
        let next = step(
            &plant,
            &law,
            &s,
            &ControllerState::new(0.25),
            0.0,
            1e-3,
            Method::Euler,
            &Zero,
        )
        .unwrap();
        assert_relative_eq!(next.gain, 0.25 + 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn rk4_and_euler_agree_on_smooth_loop() {
        let x0 = DVector::from_vec(vec![1.0, -0.5]);
        let mut cfg = SimConfig::euler(1e-3, 1.0);
        let e = simulate(&chain2(), &nominal(), &x0, &cfg).unwrap();
        cfg.method = Method::Rk4;
        let r = simulate(&chain2(), &nominal(), &x0, &cfg).unwrap();
        let xe = DVector::from_vec(e.rows.last().unwrap().x.clone());
        let xr = DVector::from_vec(r.rows.last().unwrap().x.clone());
        assert!((xe - &xr).norm() <= 1e-3 * xr.norm());
    }

    #[test]
    fn start_inside_half_level_switches_at_zero() {
        let are = solve_are(&AreProblem::identity(2, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        let law = ControlLaw::Combined(ControllerParams::new(0.1, 2.0, 1.0, are).unwrap());
        let tr = simulate(
            &chain2(),
            &law,
            &DVector::from_vec(vec![0.1, 0.0]),
            &SimConfig::euler(1e-3, 3.0),
        )
        .unwrap();
        assert_eq!(tr.meta.t1, Some(0.0));
        assert!(tr.rows.iter().all(|r| r.mode == Mode::Barrier));
    }

    #[test]
    fn nominal_unperturbed_lyapunov_nonincreasing() {
        let tr = simulate(
            &chain2(),
            &nominal(),
            &DVector::from_vec(vec![3.0, -1.0]),
            &SimConfig::euler(1e-3, 10.0),
        )
        .unwrap();
        for w in tr.rows.windows(2) {
            assert!(w[1].v <= w[0].v + 1e-6 * w[0].v.max(1e-12));
        }
    }

    #[test]
    fn stride_thins_rows() {
        let mut cfg = SimConfig::euler(1e-2, 1.0);
        cfg.record_stride = 10;
        let tr = simulate(
            &chain2(),
            &nominal(),
            &DVector::from_vec(vec![1.0, 0.0]),
            &cfg,
        )
        .unwrap();
        assert_eq!(tr.rows.len(), 11);
        for w in tr.rows.windows(2) {
            assert_relative_eq!(w[1].t - w[0].t, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let plant = PlantModel::with_constant_b(
            2,
            1.0,
            PerturbationSpec::from_signals(
                Signal::cosine(1.0, 5.0),
                Signal::sign_of_sine(0.5, 1.0),
            )
            .unwrap(),
        )
        .unwrap();
        let are = solve_are(&AreProblem::identity(2, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        let law = ControlLaw::Combined(ControllerParams::new(0.15, 2.0, 1.0, are).unwrap());
        let x0 = DVector::from_vec(vec![5.0, 0.0]);
        let cfg = SimConfig::euler(1e-3, 4.0);
        let a = simulate(&plant, &law, &x0, &cfg).unwrap();
        let b = simulate(&plant, &law, &x0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_reported() {
        let err = simulate(
            &chain2(),
            &nominal(),
            &DVector::from_vec(vec![1.0]),
            &SimConfig::euler(1e-3, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err.error, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn singularity_reported_with_prefix() {
        // Huge initial state with tiny T: cannot switch before T at this step size.
        let are = solve_are(&AreProblem::identity(2, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        let law = ControlLaw::Combined(ControllerParams::new(0.1, 0.01, 1e-9, are).unwrap());
        let err = simulate(
            &chain2(),
            &law,
            &DVector::from_vec(vec![1e3, 0.0]),
            &SimConfig::euler(1e-3, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err.error, Error::SingularityReached { .. }));
        assert!(!err.trace.rows.is_empty());
    }
}
