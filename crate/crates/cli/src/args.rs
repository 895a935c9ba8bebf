use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phylocp_core::Method;

#[derive(Debug, Parser)]
#[command(name = "phylocp", version, about = "Substitution-rate change-points on a fixed phylogeny")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from the configured true parameters.
    Simulate(SimulateArgs),
    /// Run an inference algorithm and write its chain and summary.
    Infer(InferArgs),
    /// Summarize a chain file and write plot data.
    Diagnose(DiagnoseArgs),
    /// Repeat SMC evidence estimates per cut-off and model.
    Bench(BenchArgs),
    /// List the shipped presets or print one.
    Presets(PresetsArgs),
}

/// Where the run document comes from.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run document.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Name of a shipped run document.
    #[arg(long)]
    pub preset: Option<String>,
    /// Newick tree; overrides the document's tree.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Seed; overrides the document's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Relaxed FASTA alignment; without it the document's simulation is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Match sequences to tree leaves by name instead of by position.
    #[arg(long)]
    pub map_by_name: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Number of sites; overrides the document's simulation.
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Pmmh,
    PmmhAbc,
    AbcSmc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pmmh => Method::Pmmh,
            MethodArg::PmmhAbc => Method::PmmhAbc,
            MethodArg::AbcSmc => Method::AbcSmc,
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Time-machine cut-off.
    #[arg(long)]
    pub g: Option<usize>,
    /// Chain length, including the initial record.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Chain CSV written by `infer`.
    #[arg(long)]
    pub chain: PathBuf,
    /// Summary written alongside the chain; defaults to `summary.json` next to it.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Defaults to the burn-in recorded in the summary, else 0.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Proceed when the chain and summary come from different runs.
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = 100)]
    pub max_lag: usize,
    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Cut-offs to compare; overrides the document's list.
    #[arg(long, value_delimiter = ',')]
    pub g: Vec<usize>,
    /// Models to estimate; overrides the document's list.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Independent estimates per cut-off and model.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetsArgs {
    /// Print this preset's document.
    pub name: Option<String>,
}
