mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Argmin-set solver for the maximum of affine combinations of quadratic
/// regression risks across environments.
#[derive(Parser)]
#[command(name = "riskset", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load environment CSVs, solve, and write a JSON report.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record wall-clock timing in the report. Off by default so that
        /// identical runs produce byte-identical reports; timing always goes
        /// to stderr.
        #[arg(long)]
        record_timing: bool,
    },
    /// Simulate shifted-SEM environments into one CSV per shift plus a
    /// manifest.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Observations per environment.
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Solve and compare against the applicable brute-force oracle(s).
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Root-pipeline visibility: isolate the real roots of a polynomial, or
    /// of one pair's gap polynomial.
    Roots {
        /// Ascending coefficients, comma-separated (e0,e1,...).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        coeffs: Option<Vec<f64>>,
        /// 1-based pair "i,j" of weight rows; requires --config.
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Monte Carlo convergence curve against exact population moments.
    Consistency {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit { config, out, record_timing } => {
            commands::cmd_fit(&config, &out, record_timing)
        }
        Command::Simulate { spec, out_dir, n } => commands::cmd_simulate(&spec, &out_dir, n),
        Command::Check { config } => commands::cmd_check(&config),
        Command::Roots { coeffs, pair, config } => {
            commands::cmd_roots(coeffs.as_deref(), pair.as_deref(), config.as_deref())
        }
        Command::Consistency { spec, out } => commands::cmd_consistency(&spec, &out),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
