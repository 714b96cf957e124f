mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Activation-delta verification pipeline.
#[derive(Debug, Parser)]
#[command(name = "delta-verify", version, about)]
pub struct Cli {
    /// Run all per-record work on one thread.
    #[arg(long, global = true)]
    pub single_thread: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build success/failure centroids from a labeled manifest.
    Build(BuildArgs),
    /// Classify every record against stored centroids.
    Classify(ClassifyArgs),
    /// Rerank candidates per problem and compute voting metrics.
    Rerank(RerankArgs),
    /// Emit the layer separability curve and PCA projections as CSV.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic manifest with known class geometry.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Manifest file, or a directory holding manifest.tsv or .traj files.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Include records flagged truncated (no closing think delimiter).
    #[arg(long)]
    pub allow_truncated: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Records sampled per class.
    #[arg(long, default_value_t = 10_000)]
    pub per_class: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Centroid file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long)]
    pub centroids: PathBuf,

    /// Output directory; the table goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long)]
    pub centroids: PathBuf,

    /// Comma-separated k values for top-maj@k.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16])]
    pub k: Vec<usize>,

    /// Replace scores by 0 for correct and 1 for incorrect candidates.
    #[arg(long)]
    pub oracle_scores: bool,

    /// Output directory; the table goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Centroids for the curve; built from all labeled records if omitted.
    #[arg(long)]
    pub centroids: Option<PathBuf>,

    /// Comma-separated 1-based layers to project (default: ceil(L/8), ceil(L/2), L).
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for records and manifest.tsv.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Records generated per class.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,

    #[arg(long, default_value_t = 8)]
    pub num_layers: usize,

    #[arg(long, default_value_t = 16)]
    pub dim: usize,

    /// Per-layer Euclidean distance between the class means.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,

    /// Noise standard deviation per coordinate.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,

    /// First 1-based layer whose class means differ.
    #[arg(long, default_value_t = 1)]
    pub onset_layer: usize,

    /// Number of problem ids records are spread over.
    #[arg(long, default_value_t = 10)]
    pub problems: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.single_thread {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("warning: could not restrict thread pool: {e}");
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
