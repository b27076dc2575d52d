use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lightcone_cli::{cmd_oracle, cmd_run, cmd_sweep, OracleArgs, RunOptions, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "lightcone",
    about = "Simulate nonlinear Schrödinger flows and verify light-cone decay floors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's out-dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Treat light-cone-leaves-box skips as failures.
        #[arg(long)]
        strict_geometry: bool,
    },
    /// Run one trajectory and verify the bound for several eps values.
    Sweep {
        config: PathBuf,
        /// Comma-separated eps values, each in (0, mass).
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Verification parallelism.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        strict_geometry: bool,
    },
    /// Print reference values (gaussian-integrals, strauss-rhs,
    /// gaussian-evolution, hartree-direct) at 15 significant digits.
    Oracle {
        kind: String,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        k_inner: Option<f64>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are not errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let code = match cli.command {
        Command::Run { config, out, strict_geometry } => {
            cmd_run(&config, &RunOptions { out_dir: out, strict_geometry, jobs: 1 })
        }
        Command::Sweep { config, eps, out, jobs, strict_geometry } => {
            cmd_sweep(&config, &eps, &RunOptions { out_dir: out, strict_geometry, jobs })
        }
        Command::Oracle { kind, t, k_inner, k, points, half_width, mu, gamma, dim } => cmd_oracle(
            &kind,
            &OracleArgs { t, k_inner, k, points, half_width, mu, gamma, dim },
        ),
    };
    ExitCode::from(code as u8)
}
