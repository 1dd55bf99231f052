//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "milp-decomp",
    version,
    about = "Decentralized solution of coupled MILPs by dual decomposition with adaptive tightening"
)]
pub struct Cli {
    /// Worker threads for agent fan-out and sweep trials.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the decentralized loop and write trace.csv and summary.json.
    Solve(SolveArgs),
    /// Run the adaptive loop and attach the suboptimality certificate.
    Certify(CertifyArgs),
    /// Compare adaptive and worst-case tightening on one instance.
    Compare(CompareArgs),
    /// Seeded PEV trials: sweep.csv plus histogram bins.
    #[command(alias = "sweep")]
    Benchmark(BenchmarkArgs),
    /// Solve the coupled problem exactly and write oracle.json.
    Oracle(OracleArgs),
    /// Write the instance a PEV config generates.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Instance JSON file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// PEV benchmark config JSON; the instance is generated from it.
    #[arg(long)]
    pub pev_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[command(flatten)]
    pub source: Source,
    /// Overrides the seed of a PEV config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct StepArgs {
    /// Step scale; defaults to 1/max(1, |b|_inf), or the price scale for PEV configs.
    #[arg(long)]
    pub a0: Option<f64>,
    /// Step exponent in a0/(k+1)^e, in (0.5, 1].
    #[arg(long, default_value_t = 1.0)]
    pub exponent: f64,
    /// Consecutive feasible iterates with unchanged tightening that stop the run.
    #[arg(long, default_value_t = 50)]
    pub stop_window: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Adaptive tightening, stopped by the feasibility window.
    Alg1,
    /// Adaptive tightening with best-feasible tracking over a fixed budget.
    Alg2,
    /// Worst-case tightening.
    Baseline,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub step: StepArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Alg1)]
    pub mode: ModeArg,
    /// Iteration budget; required by alg2.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Wall-clock cap in seconds for alg2.
    #[arg(long)]
    pub wall_clock: Option<f64>,
    /// Attach the suboptimality certificate to summary.json.
    #[arg(long)]
    pub certify: bool,
    /// Also solve the coupled problem exactly.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub step: StepArgs,
    /// Also solve the coupled problem exactly to report the achieved gap.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub step: StepArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub pev_config: PathBuf,
    /// First trial seed; trial t uses seed + t.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Fleet sizes to sweep, comma separated; defaults to the config's m.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<usize>,
    #[command(flatten)]
    pub step: StepArgs,
    /// Solve each trial exactly and report optimality gaps.
    #[arg(long)]
    pub oracle: bool,
    /// Also run best-feasible tracking with this iteration budget.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Record per-trial wall-clock time; off keeps outputs byte-identical.
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Branch-and-bound node cap.
    #[arg(long, default_value_t = 1_000_000)]
    pub node_limit: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub pev_config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output instance file.
    #[arg(long)]
    pub out: PathBuf,
}
