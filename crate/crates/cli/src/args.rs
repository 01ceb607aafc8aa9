use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "bomber",
    version,
    about = "Optimal ammunition allocation for the continuous Bomber Problem"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Region, boundary, allocation and survival probability at one state.
    Eval(EvalArgs),
    /// Solve the integral equation on a grid and export every node.
    Solve(SolveArgs),
    /// Detect the spend-it-all boundary on a solved grid.
    Boundary(BoundaryArgs),
    /// Run the verification battery; exits 3 if any check fails.
    Verify(VerifyArgs),
    /// Estimate survival probability of a policy by simulation.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Counterattack survival probability, in [0, 1).
    #[arg(long)]
    pub u: Option<f64>,
    /// JSON file supplying defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write output here (atomically) instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format (default: text for eval and verify, csv otherwise).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Largest ammunition level on the grid (default 5).
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Longest remaining time on the grid (default 5).
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Number of x nodes (default 2001).
    #[arg(long)]
    pub nx: Option<usize>,
    /// Number of t nodes (default 2001).
    #[arg(long)]
    pub nt: Option<usize>,
    /// Time-marching scheme: rk4 or euler.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Absolute tolerance for adaptive quadrature.
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Relative tolerance for adaptive quadrature.
    #[arg(long)]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Ammunition on hand.
    #[arg(long)]
    pub x: Option<f64>,
    /// Remaining time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Read K and P from a solved grid instead of the closed forms.
    #[arg(long)]
    pub numeric: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Export every n-th node in x and t (the last node is always kept).
    #[arg(long)]
    pub every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Times at which to locate the boundary; repeat for several.
    #[arg(long)]
    pub t: Vec<f64>,
    /// Spend-it-all detection tolerance on x - K (default: half a grid step).
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Smaller grid and samples.
    #[arg(long)]
    pub quick: bool,
    /// Random seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Ammunition on hand.
    #[arg(long)]
    pub x: Option<f64>,
    /// Remaining time.
    #[arg(long)]
    pub t: Option<f64>,
    /// closed-form, grid, spend-all or fractional:<c>.
    #[arg(long)]
    pub policy: Option<String>,
    /// Number of simulated missions (default 100000).
    #[arg(long)]
    pub n_runs: Option<u64>,
    /// Random seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of independent random streams the runs are split across (default 8).
    #[arg(long)]
    pub n_streams: Option<u64>,
    /// Let the closed-form policy fall back to a solved grid outside R2.
    #[arg(long)]
    pub numeric: bool,
}
