//! Perturbed integrator chain `ẋ = J_n x + e_n [b(t)(1 + δ_b(t)) u + f(t)]`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati::ChainStructure;

/// Interpolation used between table samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Hold {
    #[default]
    Zero,
    Linear,
}

/// Time signal used for known coefficients and perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    Constant {
        value: f64,
    },
    /// `amplitude · cos(ω t + phase)`.
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude · sign(sin(ω t))`, with `sign(0) = 0`.
    SignOfSinusoid {
        amplitude: f64,
        omega: f64,
    },
    /// `Σ c_k s^k` with `s = clamp(t, t_start, t_end) − t_start`.
    Polynomial {
        coeffs: Vec<f64>,
        t_start: f64,
        t_end: f64,
    },
    Sum {
        terms: Vec<Signal>,
    },
    /// Tabulated samples; values are held constant outside the table.
    SampledTable {
        times: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        hold: Hold,
    },
}

/// `sign` with the zero selection `sign(0) = 0`.
pub fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Signal {
    pub fn constant(value: f64) -> Self {
        Signal::Constant { value }
    }

    pub fn zero() -> Self {
        Signal::Constant { value: 0.0 }
    }

    pub fn cosine(amplitude: f64, omega: f64) -> Self {
        Signal::Sinusoid {
            amplitude,
            omega,
            phase: 0.0,
        }
    }

    pub fn sign_of_sine(amplitude: f64, omega: f64) -> Self {
        Signal::SignOfSinusoid { amplitude, omega }
    }

    pub fn sum(terms: Vec<Signal>) -> Self {
        Signal::Sum { terms }
    }

    pub fn table(times: Vec<f64>, values: Vec<f64>, hold: Hold) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidParameter(
                "sampled table needs equal, non-empty time and value columns".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "sampled table times must be strictly increasing".into(),
            ));
        }
        Ok(Signal::SampledTable {
            times,
            values,
            hold,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Constant { value } => *value,
            Signal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).cos(),
            Signal::SignOfSinusoid { amplitude, omega } => amplitude * sign((omega * t).sin()),
            Signal::Polynomial {
                coeffs,
                t_start,
                t_end,
            } => {
                let s = t.clamp(*t_start, *t_end) - t_start;
                coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
            }
            Signal::Sum { terms } => terms.iter().map(|s| s.eval(t)).sum(),
            Signal::SampledTable {
                times,
                values,
                hold,
            } => eval_table(times, values, *hold, t),
        }
    }

    /// A bound on `sup_t |s(t)|` (not necessarily tight).
    pub fn sup_bound(&self) -> f64 {
        match self {
            Signal::Constant { value } => value.abs(),
            Signal::Sinusoid { amplitude, .. } | Signal::SignOfSinusoid { amplitude, .. } => {
                amplitude.abs()
            }
            Signal::Polynomial {
                coeffs,
                t_start,
                t_end,
            } => {
                let span = (t_end - t_start).abs();
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c.abs() * span.powi(k as i32))
                    .sum()
            }
            Signal::Sum { terms } => terms.iter().map(Signal::sup_bound).sum(),
            Signal::SampledTable { values, .. } => {
                values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
        }
    }

    /// `k · s(t)` expressed structurally.
    pub fn scaled(&self, k: f64) -> Signal {
        match self {
            Signal::Constant { value } => Signal::Constant { value: k * value },
            Signal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Signal::Sinusoid {
                amplitude: k * amplitude,
                omega: *omega,
                phase: *phase,
            },
            Signal::SignOfSinusoid { amplitude, omega } => Signal::SignOfSinusoid {
                amplitude: k * amplitude,
                omega: *omega,
            },
            Signal::Polynomial {
                coeffs,
                t_start,
                t_end,
            } => Signal::Polynomial {
                coeffs: coeffs.iter().map(|c| k * c).collect(),
                t_start: *t_start,
                t_end: *t_end,
            },
            Signal::Sum { terms } => Signal::Sum {
                terms: terms.iter().map(|s| s.scaled(k)).collect(),
            },
            Signal::SampledTable {
                times,
                values,
                hold,
            } => Signal::SampledTable {
                times: times.clone(),
                values: values.iter().map(|v| k * v).collect(),
                hold: *hold,
            },
        }
    }

    /// Largest `|s(t)|` over `samples` uniform points of `[0, horizon]`.
    pub fn sampled_sup(&self, horizon: f64, samples: usize) -> f64 {
        let samples = samples.max(2);
        (0..samples)
            .map(|i| self.eval(horizon * i as f64 / (samples - 1) as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest `s(t)` over `samples` uniform points of `[0, horizon]`.
    pub fn sampled_min(&self, horizon: f64, samples: usize) -> f64 {
        let samples = samples.max(2);
        (0..samples)
            .map(|i| self.eval(horizon * i as f64 / (samples - 1) as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

fn eval_table(times: &[f64], values: &[f64], hold: Hold, t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last];
    }
    let idx = times.partition_point(|&ti| ti <= t) - 1;
    match hold {
        Hold::Zero => values[idx],
        Hold::Linear => {
            let w = (t - times[idx]) / (times[idx + 1] - times[idx]);
            values[idx] + w * (values[idx + 1] - values[idx])
        }
    }
}

/// Matched perturbation and control-coefficient uncertainty.
///
/// The declared bounds `M` and `ε_b` are verification data only. The
/// controller API takes `b(t)` values and never sees this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub f: Signal,
    pub delta_b: Signal,
    m: f64,
    eps_b: f64,
}

impl PerturbationSpec {
    pub fn new(f: Signal, delta_b: Signal, m: f64, eps_b: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::InvalidParameter(format!("M = {m} must be > 0")));
        }
        if !(0.0..1.0).contains(&eps_b) {
            return Err(Error::InvalidParameter(format!(
                "eps_b = {eps_b} must lie in [0, 1)"
            )));
        }
        Ok(Self {
            f,
            delta_b,
            m,
            eps_b,
        })
    }

    /// Uses the structural sup bounds of the signals as `M` and `ε_b`.
    /// `M` is floored at a tiny positive value when `f ≡ 0`.
    pub fn from_signals(f: Signal, delta_b: Signal) -> Result<Self> {
        let m = f.sup_bound().max(f64::MIN_POSITIVE);
        let eps_b = delta_b.sup_bound();
        Self::new(f, delta_b, m, eps_b)
    }

    pub fn none() -> Self {
        Self {
            f: Signal::zero(),
            delta_b: Signal::zero(),
            m: f64::MIN_POSITIVE,
            eps_b: 0.0,
        }
    }

    pub fn bound_m(&self) -> f64 {
        self.m
    }

    pub fn bound_eps_b(&self) -> f64 {
        self.eps_b
    }

    /// Checks the declared bounds by uniform sampling of `[0, horizon]`.
    pub fn check_bounds(&self, horizon: f64, samples: usize) -> Result<()> {
        let f_sup = self.f.sampled_sup(horizon, samples);
        if f_sup > self.m * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "sampled |f| reaches {f_sup} > declared M = {}",
                self.m
            )));
        }
        let d_sup = self.delta_b.sampled_sup(horizon, samples);
        if d_sup > self.eps_b * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "sampled |delta_b| reaches {d_sup} > declared eps_b = {}",
                self.eps_b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub structure: ChainStructure,
    /// Known control coefficient `b(t)`.
    pub b: Signal,
    pub b_lower: f64,
    pub perturbation: PerturbationSpec,
}

impl PlantModel {
    pub fn new(
        structure: ChainStructure,
        b: Signal,
        b_lower: f64,
        perturbation: PerturbationSpec,
    ) -> Result<Self> {
        if !(b_lower > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "b_lower = {b_lower} must be > 0"
            )));
        }
        Ok(Self {
            structure,
            b,
            b_lower,
            perturbation,
        })
    }

    /// Chain with constant `b`, `b_lower = b / 2`.
    pub fn with_constant_b(n: usize, b: f64, perturbation: PerturbationSpec) -> Result<Self> {
        Self::new(
            ChainStructure::new(n)?,
            Signal::constant(b),
            0.5 * b,
            perturbation,
        )
    }

    pub fn order(&self) -> usize {
        self.structure.order()
    }

    pub fn b_at(&self, t: f64) -> f64 {
        self.b.eval(t)
    }

    /// Checks `b(t) > b_lower` by uniform sampling of `[0, horizon]`.
    pub fn check_b(&self, horizon: f64, samples: usize) -> Result<()> {
        let lo = self.b.sampled_min(horizon, samples);
        if lo <= self.b_lower {
            return Err(Error::InvalidParameter(format!(
                "b(t) drops to {lo} <= b_lower = {}",
                self.b_lower
            )));
        }
        Ok(())
    }

    /// Effective input gain `b(t)(1 + δ_b(t))` in the last row.
    pub fn input_gain(&self, t: f64) -> f64 {
        self.b.eval(t) * (1.0 + self.perturbation.delta_b.eval(t))
    }

    pub fn rhs(&self, t: f64, x: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let n = self.order();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let mut dx = self.structure.shift(x);
        dx[n - 1] = self.input_gain(t) * u + self.perturbation.f.eval(t);
        Ok(dx)
    }
}

/// Right-hand side of the perturbed chain.
pub fn plant_rhs(model: &PlantModel, t: f64, x: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
    model.rhs(t, x, u)
}

/// Evaluates a signal at `t`.
pub fn eval_signal(s: &Signal, t: f64) -> f64 {
    s.eval(t)
}
