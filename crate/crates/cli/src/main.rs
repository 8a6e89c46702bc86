mod dataset;
mod mosaic;
mod output;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "memsim", version, about = "Memristive learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one benchmark task and write its results.
    Run(RunArgs),
    /// Run the pattern task over a list of values of one parameter.
    Sweep(SweepArgs),
    /// Random hyperparameter search on the pattern task.
    Search(SearchArgs),
    /// Generate a dataset and write it as CSV.
    Dataset(DatasetArgs),
    /// Layout, footprint, connectivity and routing energy of a Mosaic.
    Mosaic(MosaicArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Pattern,
    Mnist,
    Rc,
}

/// Options shared by every pattern-task command.
#[derive(Debug, Clone, Args)]
pub struct PatternOpts {
    /// sign-gd, stochastic, multi-memristor or mixed-precision.
    #[arg(long, default_value = "mixed-precision")]
    pub scheme: String,
    /// Devices per polarity for the multi-memristor scheme.
    #[arg(long, default_value_t = 4)]
    pub devices: usize,
    /// Seeds, comma separated; the best run is reported.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Override the number of training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[command(flatten)]
    pub pattern: PatternOpts,
    /// pattern: pcm, perf:<bits> or float. rc: icc or float.
    #[arg(long)]
    pub device_mode: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding the MNIST IDX files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Fail (exit 2) when the final test accuracy is below this (mnist, rc).
    #[arg(long)]
    pub min_accuracy: Option<f64>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter name, e.g. lr, p, theta, grad_clip.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub pattern: PatternOpts,
    #[arg(long, default_value = "pcm")]
    pub device_mode: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// `name=lo:hi` or `name=lo:hi:log`; repeatable.
    #[arg(long = "range", required = true)]
    pub ranges: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Seed of the candidate sequence.
    #[arg(long, default_value_t = 0)]
    pub search_seed: u64,
    #[command(flatten)]
    pub pattern: PatternOpts,
    #[arg(long, default_value = "pcm")]
    pub device_mode: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    /// Spike trains of the four firing classes.
    Firing,
    /// Virtual-node features of the reservoir task.
    Reservoir,
    /// Pattern-task target signal.
    Target,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(value_enum)]
    pub kind: DatasetKind,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MosaicArgs {
    #[arg(long, default_value_t = 64)]
    pub neurons: usize,
    /// Neurons per Neuron Tile side.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Connection probability inside a tile.
    #[arg(long, default_value_t = 0.5)]
    pub p_n: f64,
    /// Pass-through probability of a Routing Tile.
    #[arg(long, default_value_t = 0.5)]
    pub p_r: f64,
    /// Mean firing rate used for the energy estimate, Hz.
    #[arg(long, default_value_t = 10.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

/// Outcome of a command that completed without error.
pub enum Verdict {
    Pass,
    Fail(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::run(&a),
        Command::Sweep(a) => sweep::sweep(&a),
        Command::Search(a) => sweep::search(&a),
        Command::Dataset(a) => dataset::dataset(&a),
        Command::Mosaic(a) => mosaic::mosaic(&a),
    };
    match result {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail(why)) => {
            eprintln!("FAILED: {why}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
