//! `dkm`: dataset generation, distributed k-means runs, and oracle
//! comparison from the command line.
//!
//! Exit codes are a stable contract for CI: 0 success, 1 input error,
//! 2 equivalence failure, 3 internal error.

mod commands;
mod csvio;
mod document;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dkm", version, about = "Distributed k-means simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset CSV and a unit-disk graph edge list.
    Generate(GenerateArgs),
    /// Run the distributed protocol and write result artifacts.
    Run(RunArgs),
    /// Run protocol and centralized oracle, report per-step deviations.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of agents.
    #[arg(long)]
    n: usize,
    /// Observation dimension (2 means observations are the positions).
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long)]
    seed: u64,
    /// Topology model; only "unit-disk" is available.
    #[arg(long, default_value = "unit-disk")]
    topology: String,
    /// Unit-disk connection radius.
    #[arg(long)]
    rho: f64,
    /// Scalar field for the observations: "two-bumps", "constant", or "none".
    #[arg(long, default_value = "none")]
    field: String,
    /// Maximum rejection-sampling attempts for connectivity.
    #[arg(long, default_value_t = 1000)]
    max_attempts: usize,
    #[arg(long)]
    out_data: String,
    #[arg(long)]
    out_graph: String,
}

#[derive(Args, Clone)]
struct ProtocolArgs {
    /// Dataset CSV written by `generate` (or hand-rolled, same header).
    #[arg(long)]
    data: String,
    /// Edge-list file, one "i j" pair per line.
    #[arg(long)]
    graph: String,
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    /// Main-cycle step budget M.
    #[arg(long, default_value_t = 50)]
    max_steps: usize,
    /// Exit criterion: c1 (stable assignments), c2 (objective delta), none.
    #[arg(long, default_value = "c1")]
    exit: String,
    /// Threshold for the c2 criterion.
    #[arg(long, default_value_t = 1e-6)]
    delta_max: f64,
    /// Upper bound on the network size known to every agent.
    #[arg(long)]
    n_upper: usize,
    /// Seed of the centroid draw stream.
    #[arg(long)]
    seed: u64,
    /// Diagonal norm weights, comma separated (one per observation
    /// component).
    #[arg(long)]
    weights: Option<String>,
    /// Initial-centroid sampling range, low bound per component.
    #[arg(long)]
    init_low: Option<String>,
    /// Initial-centroid sampling range, high bound per component.
    #[arg(long)]
    init_high: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[arg(long)]
    out_json: String,
    /// D(T) trace CSV for plotting; defaults to `<out-json>.dtrace.csv`.
    #[arg(long)]
    out_dtrace: Option<String>,
    /// Per-phase rounds CSV for plotting; defaults to `<out-json>.phases.csv`.
    #[arg(long)]
    out_phases: Option<String>,
    /// Optional consensus-round trace as JSON lines.
    #[arg(long)]
    out_trace: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Equivalence tolerance on relative deviations.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Self-test hook: perturb one distributed centroid at this step (1-based)
    /// before comparing, to prove the comparator detects divergence.
    #[arg(long)]
    inject_fault: Option<usize>,
}

/// Command outcomes carrying the process exit code.
#[derive(Debug)]
enum CliError {
    Input(String),
    Equivalence { first_divergent_step: usize },
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Equivalence { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(&args),
        Command::Run(args) => commands::run(&args),
        Command::Compare(args) => commands::compare(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Input(msg) => eprintln!("input error: {msg}"),
                CliError::Equivalence {
                    first_divergent_step,
                } => eprintln!("equivalence failure: first divergent step {first_divergent_step}"),
                CliError::Internal(msg) => eprintln!("internal error: {msg}"),
            }
            ExitCode::from(err.code())
        }
    }
}
