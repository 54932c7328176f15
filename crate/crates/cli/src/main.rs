//! `fracwave` binary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracwave_cli::commands::{self, exit_code, MlRequest, Suite, EXIT_VALIDATION};
use fracwave_cli::config::RunConfig;
use fracwave_core::linear_solver::DEFAULT_TOL;

#[derive(Parser)]
#[command(
    name = "fracwave",
    version,
    about = "Superdiffusive fractional wave solver and verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate E_{alpha,beta}(z), or t^p E_{alpha,beta}(-lambda t^alpha) with --lambda.
    MlEval {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Argument; repeat for several values.
        #[arg(long, allow_negative_numbers = true)]
        z: Vec<f64>,
        #[arg(long, allow_negative_numbers = true, conflicts_with = "z", requires = "t")]
        lambda: Option<f64>,
        /// Times for kernel evaluation; repeat for several values.
        #[arg(long)]
        t: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t_power: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve the problem described by a run configuration.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a verification suite against a run configuration.
    Verify {
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FRACWAVE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("FRACWAVE_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> fracwave_core::Result<u8> {
    match cli.command {
        Command::MlEval {
            alpha,
            beta,
            z,
            lambda,
            t,
            t_power,
            tol,
            csv,
        } => {
            let req = match lambda {
                Some(lam) => MlRequest::Kernel { lam, times: t, t_power },
                None if z.is_empty() => {
                    return Err(fracwave_core::Error::Configuration(
                        "give at least one --z, or --lambda with --t".into(),
                    ))
                }
                None => MlRequest::Points(z),
            };
            commands::ml_eval(alpha, beta, &req, tol, csv.as_deref())
        }
        Command::Solve { config, out_dir } => {
            let cfg = RunConfig::load(&config)?;
            commands::solve(&cfg, out_dir.as_deref())
        }
        Command::Verify { config, suite, out_dir } => {
            let cfg = RunConfig::load(&config)?;
            commands::verify(&cfg, suite, out_dir.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
