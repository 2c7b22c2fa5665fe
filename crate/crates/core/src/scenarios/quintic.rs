use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::Signal;

/// Rest-to-rest quintic from `q0` at `t0` to `qf` at `tf`: zero velocity
/// and acceleration at both ends. Outside `[t0, tf]` the end values hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuinticTrajectory {
    pub t0: f64,
    pub tf: f64,
    pub q0: f64,
    pub qf: f64,
    /// Coefficients in powers of `(t − t0)`.
    pub coeffs: [f64; 6],
}

impl QuinticTrajectory {
    pub fn new(t0: f64, tf: f64, q0: f64, qf: f64) -> Result<Self> {
        if !(tf > t0) {
            return Err(Error::InvalidParameter(format!(
                "need tf > t0 ({t0}, {tf})"
            )));
        }
        let d = tf - t0;
        let h = qf - q0;
        // q0 + h (10 s³ − 15 s⁴ + 6 s⁵), s = (t − t0)/d
        let coeffs = [
            q0,
            0.0,
            0.0,
            10.0 * h / d.powi(3),
            -15.0 * h / d.powi(4),
            6.0 * h / d.powi(5),
        ];
        Ok(Self {
            t0,
            tf,
            q0,
            qf,
            coeffs,
        })
    }

    /// `(position, velocity, acceleration)` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let s = t.clamp(self.t0, self.tf) - self.t0;
        let c = &self.coeffs;
        let pos = c.iter().rev().fold(0.0, |acc, ci| acc * s + ci);
        let vel = (1..6).rev().fold(0.0, |acc, k| acc * s + k as f64 * c[k]);
        let acc = (2..6)
            .rev()
            .fold(0.0, |acc, k| acc * s + (k * (k - 1)) as f64 * c[k]);
        (pos, vel, acc)
    }

    fn derivative_signal(&self, order: usize) -> Signal {
        let coeffs = (order..6)
            .map(|k| {
                let falling: usize = (k + 1 - order..=k).product();
                falling as f64 * self.coeffs[k]
            })
            .collect();
        Signal::Polynomial {
            coeffs,
            t_start: self.t0,
            t_end: self.tf,
        }
    }

    pub fn position_signal(&self) -> Signal {
        self.derivative_signal(0)
    }

    pub fn velocity_signal(&self) -> Signal {
        self.derivative_signal(1)
    }

    pub fn acceleration_signal(&self) -> Signal {
        self.derivative_signal(2)
    }

    /// `max |q̈|`, attained at `s = (3 ± √3)/6`.
    pub fn max_abs_acceleration(&self) -> f64 {
        let d = self.tf - self.t0;
        10.0 / 3f64.sqrt() * (self.qf - self.q0).abs() / (d * d)
    }
}

/// Evaluates the trajectory at `t`.
pub fn quintic_eval(traj: &QuinticTrajectory, t: f64) -> (f64, f64, f64) {
    traj.eval(t)
}
