use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Scaling symmetries, central configurations and conformal flows.
///
/// Exit codes: 0 success, 1 I/O or invalid input, 2 non-convergence,
/// 3 verification failure, 4 dynamics guard (collision, blow-up).
/// Log level is read from SCALESYM_LOG (default "warn").
#[derive(Debug, Parser)]
#[command(name = "scalesym", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for a central configuration and write a relative equilibrium.
    SolveCc(SolveArgs),
    /// Run symmetry and flow checks on a system.
    Verify(VerifyArgs),
    /// Integrate a system and write a trajectory CSV.
    Integrate(IntegrateArgs),
    /// Compare a relative equilibrium's flow with its homothetic prediction.
    Homothetic(HomotheticArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// System spec JSON.
    #[arg(long)]
    pub system: PathBuf,
    /// Initial configuration CSV, one row per body. Drawn from --seed when absent.
    #[arg(long, conflicts_with = "collinear")]
    pub init: Option<PathBuf>,
    /// Search for a collinear configuration (bodies on a line, in mass order).
    #[arg(long)]
    pub collinear: bool,
    /// Locked inertia normalization I(q) = I0.
    #[arg(long, default_value_t = 1.0)]
    pub i0: f64,
    /// Residual tolerance for convergence and certification.
    #[arg(long, default_value = "1e-10")]
    pub tol: f64,
    /// Maximum solver iterations.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Seed for random starts and the symmetry gate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent solves from seeds seed..seed+jobs, run in parallel.
    /// Requires --out; job i writes <stem>-<i>.<ext>.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=256))]
    pub jobs: u32,
    /// Output JSON path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// System spec JSON.
    #[arg(long)]
    pub system: PathBuf,
    /// Comma-separated subset of symplectic,invariance,momentum,scaling-function,noether,flow.
    /// Defaults to every check that applies to the system.
    #[arg(long, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    /// Random probes per symmetry check.
    #[arg(long, default_value_t = 32)]
    pub samples: usize,
    /// Probe seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative residual tolerance for the symmetry checks.
    #[arg(long, default_value = "1e-6")]
    pub tol: f64,
    /// Step for the noether and flow checks.
    #[arg(long, default_value = "1e-3")]
    pub dt: f64,
    /// Window length for the noether and flow checks.
    #[arg(long, default_value_t = 1.0)]
    pub t_final: f64,
    /// Output JSON path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IntegrateArgs {
    /// System spec JSON.
    #[arg(long)]
    pub system: PathBuf,
    /// Initial configuration CSV (momenta start at zero).
    #[arg(long, conflicts_with = "re")]
    pub init: Option<PathBuf>,
    /// Start from the phase point of a relative equilibrium JSON.
    #[arg(long)]
    pub re: Option<PathBuf>,
    /// Final time.
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    /// Step size (rounded down so that it divides t_final).
    #[arg(long, default_value = "1e-3")]
    pub dt: f64,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HomotheticArgs {
    /// Certified relative equilibrium JSON.
    #[arg(long)]
    pub re: PathBuf,
    /// Final time.
    #[arg(long, default_value_t = 1.0)]
    pub t_final: f64,
    /// Step size.
    #[arg(long, default_value = "1e-4")]
    pub dt: f64,
    /// Output JSON path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
