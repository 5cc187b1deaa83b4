use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ics::IcsError;

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(
    name = "ics",
    version,
    about = "Instance-weighted central similarity hashing"
)]
struct Cli {
    /// Worker threads (0 = one per core). `--threads 1` gives bit-reproducible runs.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one hash center per label and print their min pairwise Hamming distance.
    Centers(CentersArgs),
    /// Write a synthetic multi-label dataset with known label proportions.
    Generate(GenerateArgs),
    /// Train an encoder and per-sample center weights.
    Train(TrainArgs),
    /// Encode queries and database with a checkpoint and report mAP@k.
    Eval(EvalArgs),
    /// Solve the center-weight subproblem for rows of distances.
    SolveWeights(SolveWeightsArgs),
    /// Compare learned weights with ground-truth proportions.
    WeightReport(WeightReportArgs),
}

#[derive(Debug, Args)]
pub struct CentersArgs {
    /// Code length K.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub bits: u64,
    /// Number of labels M.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub labels: u64,
    #[arg(long, env = "ICS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub features: usize,
    #[arg(long, default_value_t = 8)]
    pub labels: usize,
    #[arg(long, default_value_t = 1)]
    pub min_labels: usize,
    #[arg(long, default_value_t = 3)]
    pub max_labels: usize,
    /// Dirichlet concentration for the proportions.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Feature noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, env = "ICS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Read `--data` as headerless CSV with this many trailing label columns.
    #[arg(long)]
    pub csv_labels: Option<usize>,
    #[arg(long)]
    pub centers: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 90)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Divide the learning rate by `--lr-decay-factor` every this many epochs (0 = never).
    #[arg(long, default_value_t = 30)]
    pub lr_decay_every: usize,
    #[arg(long, default_value_t = 10.0)]
    pub lr_decay_factor: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    /// per-image | per-center
    #[arg(long, default_value = "per-image")]
    pub aggregation: ics::loss::Aggregation,
    /// learned | equal
    #[arg(long, default_value = "learned")]
    pub weight_mode: ics::encoder::WeightMode,
    /// paper | exact
    #[arg(long, default_value = "paper")]
    pub gradient_mode: ics::weights::GradientMode,
    /// fixed | spectral; defaults to fixed for paper mode and spectral for exact mode.
    #[arg(long)]
    pub step_rule: Option<ics::weights::StepRule>,
    /// Weight-solver step size.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Comma-separated hidden layer widths; empty for a linear encoder.
    #[arg(long, default_value = "64", value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long, env = "ICS_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub database: PathBuf,
    /// Read dataset inputs as headerless CSV with this many trailing label columns.
    #[arg(long)]
    pub csv_labels: Option<usize>,
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `query_codes.txt` and `database_codes.txt` into this directory.
    #[arg(long)]
    pub dump_codes: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveWeightsArgs {
    /// One sample per line: its center distances, space separated.
    #[arg(long)]
    pub distances: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value = "paper")]
    pub gradient_mode: ics::weights::GradientMode,
    #[arg(long)]
    pub step_rule: Option<ics::weights::StepRule>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightReportArgs {
    /// `sample,label,weight` CSV as written by `train`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Dataset with ground-truth proportions.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn exit_code(err: &IcsError) -> u8 {
    match err {
        IcsError::Argument(_) | IcsError::Capacity(_) | IcsError::Config(_) => 2,
        IcsError::Data(_)
        | IcsError::Parse { .. }
        | IcsError::Evaluation(_)
        | IcsError::Io { .. } => 3,
        IcsError::Invariant(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(4);
    }
    let result = match &cli.command {
        Command::Centers(a) => commands::centers(a, cli.threads),
        Command::Generate(a) => commands::generate(a, cli.threads),
        Command::Train(a) => commands::train(a, cli.threads),
        Command::Eval(a) => commands::eval(a, cli.threads),
        Command::SolveWeights(a) => commands::solve_weights(a, cli.threads),
        Command::WeightReport(a) => commands::weight_report(a, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
