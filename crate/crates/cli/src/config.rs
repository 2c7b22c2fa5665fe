//! Run configuration read from a TOML file.
//!
//! ```toml
//! scenario = "torsional"          # raw_chain | torsional | furuta
//! label = "eps1"
//!
//! [controller]
//! gamma = 0.1
//! alpha = 0.1                      # number or "auto" (0.9 of the bound)
//! t_final = 2.0
//! epsilon = 1.0
//! q_diag = [1.0, 1.0]              # optional, identity by default
//! check_alpha = true               # reject alpha above the bound
//!
//! [sim]
//! dt = 1e-3
//! t_end = 15.0
//!
//! [initial]
//! x0 = [5.0, 0.0]                  # theta_p0 = 0.3 for furuta
//! ```
//!
//! The scenario picks which of `[raw_chain]`, `[torsional]` or `[furuta]`
//! must be present. `[sweep]`, `[analysis]` and `[output]` are optional.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use chainbar::analysis::BoundInputs;
use chainbar::controller::{ControlLaw, ControllerParams};
use chainbar::plant::{PerturbationSpec, PlantModel, Signal};
use chainbar::riccati::{
    alpha_bound, solve_are, AreProblem, AreSolution, ChainStructure, DEFAULT_TOL,
};
use chainbar::scenarios::furuta::{furuta_closed_loop_plant, FurutaParams, FurutaPlant};
use chainbar::scenarios::quintic::QuinticTrajectory;
use chainbar::scenarios::torsional::{torsional_error_plant, TorsionalParams, TorsionalPlant};
use chainbar::sim::SimConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RawChain,
    Torsional,
    Furuta,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::RawChain => "raw_chain",
            Scenario::Torsional => "torsional",
            Scenario::Furuta => "furuta",
        })
    }
}

/// A number, or the keyword `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Auto {
    Value(f64),
    Keyword(String),
}

impl Auto {
    fn resolve(
        &self,
        name: &str,
        auto: impl FnOnce() -> Result<f64, CliError>,
    ) -> Result<f64, CliError> {
        match self {
            Auto::Value(v) => Ok(*v),
            Auto::Keyword(k) if k == "auto" => auto(),
            Auto::Keyword(k) => Err(CliError::Config(format!(
                "{name}: expected a number or \"auto\", got \"{k}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    #[default]
    Combined,
    Nominal,
    Redesigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerBlock {
    pub gamma: f64,
    #[serde(default = "auto")]
    pub alpha: Auto,
    pub t_final: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_diag: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub check_alpha: bool,
    #[serde(default)]
    pub law: LawKind,
    /// Robust gain of the redesigned law; `"auto"` is `M/(1 − ε_b)`.
    #[serde(default = "auto")]
    pub rho: Auto,
    #[serde(default)]
    pub initial_gain: f64,
}

fn auto() -> Auto {
    Auto::Keyword("auto".into())
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChainBlock {
    pub n: usize,
    #[serde(default = "unit_b")]
    pub b: Signal,
    /// Lower bound on `b`; half its sampled minimum by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_lower: Option<f64>,
    pub f: Signal,
    pub delta_b: Signal,
    /// Declared bounds. Required by `bounds`; `run` falls back to the
    /// analytic supremum of the signals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_b: Option<f64>,
}

fn unit_b() -> Signal {
    Signal::constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryBlock {
    pub t0: f64,
    pub tf: f64,
    pub q0: f64,
    pub qf: f64,
}

// `deny_unknown_fields` does not combine with `flatten`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorsionalBlock {
    #[serde(flatten)]
    pub params: TorsionalParams,
    pub trajectory: TrajectoryBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_p0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    #[serde(default = "half")]
    pub theta: f64,
    #[serde(default = "half")]
    pub mu_star: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        Self {
            theta: 0.5,
            mu_star: 0.5,
        }
    }
}

/// Lists to take the cartesian product over. Empty lists keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t_final: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x0: Vec<Vec<f64>>,
    /// Rescales `f` of a raw chain to the given bound.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub controller: ControllerBlock,
    pub sim: SimConfig,
    #[serde(default)]
    pub initial: InitialBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_chain: Option<RawChainBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torsional: Option<TorsionalBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub furuta: Option<FurutaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
}

/// Plant side of a resolved run.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ScenarioPlant {
    RawChain(PlantModel),
    Torsional(TorsionalPlant),
    Furuta(FurutaPlant),
}

impl ScenarioPlant {
    pub fn model(&self) -> &PlantModel {
        match self {
            ScenarioPlant::RawChain(p) => p,
            ScenarioPlant::Torsional(t) => &t.plant,
            ScenarioPlant::Furuta(f) => &f.plant,
        }
    }
}

/// Everything needed to simulate, built from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub label: String,
    pub plant: ScenarioPlant,
    pub law: ControlLaw,
    pub x0: DVector<f64>,
    pub sim: SimConfig,
    pub initial_gain: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.scenario.to_string())
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        let missing = |block: &str| {
            CliError::Config(format!(
                "scenario {} needs a [{block}] block",
                self.scenario
            ))
        };
        match self.scenario {
            Scenario::RawChain => {
                let rc = self
                    .raw_chain
                    .as_ref()
                    .ok_or_else(|| missing("raw_chain"))?;
                if rc.n == 0 {
                    return Err(CliError::Config("raw_chain.n must be >= 1".into()));
                }
                self.x0_for(rc.n)?;
            }
            Scenario::Torsional => {
                self.torsional
                    .as_ref()
                    .ok_or_else(|| missing("torsional"))?;
                self.x0_for(2)?;
            }
            Scenario::Furuta => {
                self.furuta.as_ref().ok_or_else(|| missing("furuta"))?;
                if self.initial.theta_p0.is_none() {
                    return Err(CliError::Config("furuta needs initial.theta_p0".into()));
                }
            }
        }
        if let Some(q) = &self.controller.q_diag {
            if q.len() != self.order() {
                return Err(CliError::Config(format!(
                    "controller.q_diag has {} entries, chain order is {}",
                    q.len(),
                    self.order()
                )));
            }
        }
        if let Some(sw) = &self.sweep {
            if !sw.m.is_empty() && self.scenario != Scenario::RawChain {
                return Err(CliError::Config("sweep.m only applies to raw_chain".into()));
            }
            if sw.x0.iter().any(|x| x.len() != self.order())
                || (!sw.x0.is_empty() && self.scenario == Scenario::Furuta)
            {
                return Err(CliError::Config(
                    "sweep.x0 entries must match the chain order".into(),
                ));
            }
        }
        self.sim.validate()?;
        Ok(())
    }

    pub fn order(&self) -> usize {
        match self.scenario {
            Scenario::RawChain => self.raw_chain.as_ref().map_or(0, |rc| rc.n),
            Scenario::Torsional => 2,
            Scenario::Furuta => 4,
        }
    }

    fn x0_for(&self, n: usize) -> Result<DVector<f64>, CliError> {
        let x0 = self
            .initial
            .x0
            .as_ref()
            .ok_or_else(|| CliError::Config("initial.x0 is required".into()))?;
        if x0.len() != n {
            return Err(CliError::Config(format!(
                "initial.x0 has {} entries, chain order is {n}",
                x0.len()
            )));
        }
        Ok(DVector::from_column_slice(x0))
    }

    pub fn are_problem(&self) -> Result<AreProblem, CliError> {
        let n = self.order();
        let q = self
            .controller
            .q_diag
            .clone()
            .unwrap_or_else(|| vec![1.0; n]);
        Ok(AreProblem::diagonal(self.controller.gamma, &q)?)
    }

    pub fn solve_are(&self) -> Result<AreSolution, CliError> {
        Ok(solve_are(&self.are_problem()?, DEFAULT_TOL)?)
    }

    fn raw_chain_plant(&self, rc: &RawChainBlock) -> Result<PlantModel, CliError> {
        // The plant wants M > 0; a declared 0 only matters to the bounds.
        let m =
            rc.m.unwrap_or_else(|| rc.f.sup_bound())
                .max(f64::MIN_POSITIVE);
        let eps_b = rc.eps_b.unwrap_or_else(|| rc.delta_b.sup_bound());
        let pert = PerturbationSpec::new(rc.f.clone(), rc.delta_b.clone(), m, eps_b)?;
        let b_lower = match rc.b_lower {
            Some(v) => v,
            None => 0.5 * rc.b.sampled_min(self.sim.t_end, 10_001),
        };
        Ok(PlantModel::new(
            ChainStructure::new(rc.n)?,
            rc.b.clone(),
            b_lower,
            pert,
        )?)
    }

    pub fn plant(&self) -> Result<ScenarioPlant, CliError> {
        Ok(match self.scenario {
            Scenario::RawChain => ScenarioPlant::RawChain(
                self.raw_chain_plant(self.raw_chain.as_ref().expect("validated"))?,
            ),
            Scenario::Torsional => {
                let tb = self.torsional.as_ref().expect("validated");
                let tr = &tb.trajectory;
                let traj = QuinticTrajectory::new(tr.t0, tr.tf, tr.q0, tr.qf)?;
                ScenarioPlant::Torsional(torsional_error_plant(&tb.params, &traj)?)
            }
            Scenario::Furuta => ScenarioPlant::Furuta(furuta_closed_loop_plant(
                self.furuta.as_ref().expect("validated"),
            )?),
        })
    }

    /// Builds plant, law and initial state. ARE failures surface as
    /// numerical errors; everything else as configuration errors.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        self.validate()?;
        let plant = self.plant()?;
        let are = self.solve_are()?;
        let c = &self.controller;
        let law = match c.law {
            LawKind::Combined => {
                let alpha = c.alpha.resolve("controller.alpha", || {
                    Ok(0.9 * alpha_bound(&are, &are.problem.q, are.order())?)
                })?;
                let params = if c.check_alpha {
                    ControllerParams::new(alpha, c.t_final, c.epsilon, are)?
                } else {
                    ControllerParams::new_unchecked_alpha(alpha, c.t_final, c.epsilon, are)?
                };
                ControlLaw::Combined(params)
            }
            LawKind::Nominal => ControlLaw::Nominal { are },
            LawKind::Redesigned => {
                let pert = &plant.model().perturbation;
                let rho = c.rho.resolve("controller.rho", || {
                    Ok(pert.bound_m() / (1.0 - pert.bound_eps_b()))
                })?;
                if !rho.is_finite() || rho < 0.0 {
                    return Err(CliError::Config(format!(
                        "controller.rho = {rho} must be finite and >= 0"
                    )));
                }
                ControlLaw::Redesigned { are, rho }
            }
        };
        let x0 = match &plant {
            ScenarioPlant::Furuta(fp) => {
                fp.initial_state(self.initial.theta_p0.expect("validated"))
            }
            _ => self.x0_for(self.order())?,
        };
        Ok(Resolved {
            label: self.label(),
            plant,
            law,
            x0,
            sim: self.sim.clone(),
            initial_gain: c.initial_gain,
        })
    }

    /// Inputs for the bound report. A raw chain must declare `m` and `eps_b`.
    pub fn bound_inputs(
        &self,
        plant: &ScenarioPlant,
        x0: &DVector<f64>,
    ) -> Result<BoundInputs, CliError> {
        let (m, eps_b) = match self.scenario {
            Scenario::RawChain => {
                let rc = self.raw_chain.as_ref().expect("validated");
                let m =
                    rc.m.ok_or_else(|| CliError::Config("bounds needs raw_chain.m".into()))?;
                let eps_b = rc
                    .eps_b
                    .ok_or_else(|| CliError::Config("bounds needs raw_chain.eps_b".into()))?;
                (m, eps_b)
            }
            _ => {
                let p = &plant.model().perturbation;
                (p.bound_m(), p.bound_eps_b())
            }
        };
        let an = self.analysis.clone().unwrap_or_default();
        Ok(BoundInputs {
            m,
            eps_b,
            theta: an.theta,
            x0_norm: x0.norm(),
            mu_star: an.mu_star,
            epsilon: self.controller.epsilon,
        })
    }

    /// One config per point of the sweep grid, labelled by its values.
    pub fn expand_sweep(&self) -> Vec<RunConfig> {
        let sw = self.sweep.clone().unwrap_or_default();
        let eps: Vec<Option<f64>> = opt_list(&sw.epsilon);
        let tf: Vec<Option<f64>> = opt_list(&sw.t_final);
        let x0s: Vec<Option<Vec<f64>>> = opt_list(&sw.x0);
        let ms: Vec<Option<f64>> = opt_list(&sw.m);
        let base = self.label();
        let mut out = Vec::new();
        for e in &eps {
            for t in &tf {
                for x in &x0s {
                    for m in &ms {
                        let mut c = self.clone();
                        c.sweep = None;
                        let mut tag = Vec::new();
                        if let Some(e) = e {
                            c.controller.epsilon = *e;
                            tag.push(format!("eps{e}"));
                        }
                        if let Some(t) = t {
                            c.controller.t_final = *t;
                            tag.push(format!("T{t}"));
                        }
                        if let Some(x) = x {
                            c.initial.x0 = Some(x.clone());
                            let parts: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                            tag.push(format!("x0_{}", parts.join("_")));
                        }
                        if let (Some(m), Some(rc)) = (m, c.raw_chain.as_mut()) {
                            let old = rc.m.unwrap_or_else(|| rc.f.sup_bound());
                            let k = if old > 0.0 { m / old } else { 0.0 };
                            rc.f = rc.f.scaled(k);
                            rc.m = Some(*m);
                            tag.push(format!("M{m}"));
                        }
                        c.label = Some(if tag.is_empty() {
                            base.clone()
                        } else {
                            format!("{base}_{}", tag.join("_"))
                        });
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

fn opt_list<T: Clone>(v: &[T]) -> Vec<Option<T>> {
    if v.is_empty() {
        vec![None]
    } else {
        v.iter().cloned().map(Some).collect()
    }
}
