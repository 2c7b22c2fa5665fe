//! Library side of the `chainbar` command: config parsing and the
//! subcommands, kept out of `main.rs` so tests can drive them directly.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] chainbar::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for configuration and IO problems, 2 for closed-loop invariant
    /// violations, 3 for Riccati failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_invariant_violation() => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}
