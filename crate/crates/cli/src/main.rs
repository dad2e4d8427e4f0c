use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ihmpc_cli::commands;

/// Infinite-horizon MPC: simulate controller runs, derive convergence
/// certificates, and re-verify stored traces.
#[derive(Parser)]
#[command(name = "ihmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario closed loop and optionally write the trace CSV
    Simulate {
        /// Scenario JSON file
        #[arg(long)]
        scenario: PathBuf,
        /// Number of closed-loop steps (overrides the scenario's value)
        #[arg(long)]
        steps: Option<usize>,
        /// Where to write the trace CSV
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Derive a scenario's certificates and judge their sufficiency
    Certify {
        /// Scenario JSON file
        #[arg(long)]
        scenario: PathBuf,
        /// Where to write the certificate report as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Replay a stored trace against its scenario and re-judge it
    Check {
        /// Scenario JSON file
        #[arg(long)]
        scenario: PathBuf,
        /// Trace CSV produced by `simulate`
        #[arg(long)]
        trace: PathBuf,
    },
    /// Cross-check the QP solver against the brute-force oracle
    QpVerify {
        /// Number of random instances
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// RNG seed
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Largest allowed relative objective gap
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { scenario, steps, trace } => {
            commands::simulate(&scenario, steps, trace.as_deref())
        }
        Command::Certify { scenario, json } => commands::certify(&scenario, json.as_deref()),
        Command::Check { scenario, trace } => commands::check(&scenario, &trace),
        Command::QpVerify { count, seed, tol } => commands::qp_verify(count, seed, tol),
    };
    std::process::exit(code);
}
