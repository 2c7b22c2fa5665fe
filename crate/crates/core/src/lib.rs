//! Adaptive barrier-function control of perturbed integrator chains.
//!
//! A chain `ẋ = J_n x + e_n [b(t)(1 + δ_b(t)) u + f(t)]` with unknown but
//! bounded `f` and `δ_b` is driven into `{xᵀPx ≤ ε/2}` before a
//! predefined time `T` by a time-varying gain with an adaptive
//! discontinuous term, then kept inside `{xᵀPx < ε}` by a barrier-function
//! gain. `P` solves a chain Riccati equation.
//!
//! Modules:
//! * [`riccati`]: Riccati design and spectral utilities.
//! * [`plant`]: signals and the perturbed chain.
//! * [`controller`]: nominal, redesigned and combined switching laws.
//! * [`sim`] and [`trace`]: fixed-step closed loop and CSV traces.
//! * [`analysis`]: closed-form bounds and the scaled-time oracle.
//! * [`scenarios`]: torsional spring-damper tracking and a linearized
//!   rotary pendulum reduced to chain form.

// Validation is written as `!(x > 0.0)` throughout so that NaN fails it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod error;
pub mod plant;
pub mod riccati;
pub mod scenarios;
pub mod sim;
pub mod trace;

pub use controller::{ControlLaw, ControllerParams, ControllerState, Mode};
pub use error::{Error, Result};
pub use plant::{PerturbationSpec, PlantModel, Signal};
pub use riccati::{solve_are, AreProblem, AreSolution, ChainStructure};
pub use sim::{simulate, Method, SimConfig};
pub use trace::Trace;
