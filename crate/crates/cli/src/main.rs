use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chainbar_cli::commands;
use chainbar_cli::config::RunConfig;
use chainbar_cli::CliError;

#[derive(Parser)]
#[command(
    name = "chainbar",
    version,
    about = "Simulate adaptive barrier-function control of integrator chains"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write its trace and report.
    Run {
        config: PathBuf,
        /// Output directory (overrides [output].dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every point of the [sweep] grid and print a comparison table.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the closed-form bounds for a config.
    Bounds { config: PathBuf },
    /// Solve the chain Riccati equation.
    Are {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        gamma: f64,
        /// Diagonal of Q, comma separated. Identity if omitted.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        q_diag: Option<Vec<f64>>,
    },
    /// Re-validate a stored trace.
    Check { trace: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are config errors; 2 is reserved for invariants.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("chainbar: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8, CliError> {
    match cmd {
        Cmd::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let o = commands::run(&cfg, out.as_deref())?;
            print!(
                "{}",
                toml::to_string(&o.summary).map_err(|e| CliError::Config(e.to_string()))?
            );
            if let Some(e) = &o.error {
                eprintln!("chainbar: {e} (partial trace written)");
            }
            Ok(o.exit_code())
        }
        Cmd::Sweep { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let outcomes = commands::sweep(&cfg, out.as_deref())?;
            print!("{}", commands::sweep_table(&outcomes));
            Ok(outcomes
                .iter()
                .map(commands::Outcome::exit_code)
                .max()
                .unwrap_or(0))
        }
        Cmd::Bounds { config } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", commands::bounds(&cfg)?);
            Ok(0)
        }
        Cmd::Are { n, gamma, q_diag } => {
            print!("{}", commands::are(n, gamma, q_diag.as_deref())?);
            Ok(0)
        }
        Cmd::Check { trace } => {
            let lines = commands::check(&trace)?;
            for l in &lines {
                println!("{l}");
            }
            Ok(if lines.iter().any(|l| l.pass == Some(false)) {
                2
            } else {
                0
            })
        }
    }
}
