//! `daot`: scenarios, feasibility checks, solving and plot-data export for
//! departure/arrival constrained network transport.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use daot_core::SweepMode;

/// Exit codes shared by every subcommand.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    /// Invalid or unreadable input, or an infeasible instance.
    pub const INVALID: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
    pub const UNREACHABLE_MASS: u8 = 4;
}

#[derive(Parser, Debug)]
#[command(name = "daot", version, about = "Optimal transport on networks with departure/arrival time constraints")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalOpts {
    /// Stopping tolerance on E0 + ET + V.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Entropic regularization strength.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, value_parser = parse_sweep)]
    pub sweep: Option<SweepMode>,
    /// Force (true) or forbid (false) log-domain messages.
    #[arg(long, global = true)]
    pub log_domain: Option<bool>,
    /// Output directory (solve, extract-plan) or file (scenario, plotdata, inspect-kernel).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

fn parse_sweep(s: &str) -> Result<SweepMode, String> {
    match s {
        "gauss-seidel" => Ok(SweepMode::GaussSeidel),
        "jacobi" => Ok(SweepMode::Jacobi),
        other => Err(format!("unknown sweep '{other}', expected gauss-seidel or jacobi")),
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print or save one of the built-in scenarios as JSON.
    Scenario {
        /// e.g. scenario_61, 62_line, 63
        name: Option<String>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        emit: Option<PathBuf>,
        /// List the built-in scenario names.
        #[arg(long)]
        list: bool,
    },
    /// Departure/arrival dominance check. Exit 0 when feasible, 2 otherwise.
    Feasibility { scenario: PathBuf },
    /// Solve a scenario and write marginals, trace and summary.
    Solve { scenario: PathBuf },
    /// Solve a scenario and write the heaviest cells of one path's plan.
    ExtractPlan {
        scenario: PathBuf,
        /// Index of the path in the scenario's path list.
        #[arg(long, default_value_t = 0)]
        path: usize,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        max_cells: u128,
        #[arg(long, default_value_t = 0.0)]
        mass_floor: f64,
    },
    /// Join a solve run's marginals and caps into one long-format CSV.
    Plotdata { run_dir: PathBuf },
    /// Compare the engine with the dense reference on a small single-path scenario.
    #[command(hide = true)]
    Oracle { scenario: PathBuf },
    /// Dump one edge's Gibbs kernel as CSV.
    #[command(hide = true)]
    InspectKernel {
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        #[arg(long, default_value_t = 10)]
        n_t: usize,
        #[arg(long, default_value_t = 1.0)]
        t_f: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(fail) => {
            eprintln!("error: {:#}", fail.error);
            ExitCode::from(fail.code)
        }
    }
}
