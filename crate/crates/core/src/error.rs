use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("Riccati iteration did not converge (residual {residual:.3e} > tol {tol:.3e})")]
    NonConvergence { residual: f64, tol: f64 },

    #[error("alpha bound is undefined for a first-order chain (n = 1)")]
    UndefinedForFirstOrder,

    #[error(
        "time-varying gain reached its singularity at t = {t} (T = {t_final}) before switching"
    )]
    SingularityReached { t: f64, t_final: f64 },

    #[error("barrier violated at t = {t}: V = {v:.6e} >= epsilon = {epsilon:.6e}")]
    BarrierViolated { t: f64, v: f64, epsilon: f64 },

    #[error("closed-loop state diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("invalid target: mu* = {mu_star} must lie in (0, |x0| = {x0_norm})")]
    InvalidTarget { mu_star: f64, x0_norm: f64 },

    #[error("time {t} outside the scaling domain [0, {t_final})")]
    DomainError { t: f64, t_final: f64 },

    #[error("insufficient samples: need at least {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("pair (A, B) is not controllable (controllability matrix rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for closed-loop failures: singularity, barrier, divergence.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::SingularityReached { .. }
                | Error::BarrierViolated { .. }
                | Error::Diverged { .. }
        )
    }

    /// True for failures of the Riccati design step.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoStabilizingSolution(_) | Error::NonConvergence { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
