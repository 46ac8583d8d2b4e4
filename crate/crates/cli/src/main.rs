//! `spdlrr` command-line tool.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "spdlrr",
    version,
    about = "Hyperspectral classification by superpixel-wise low-rank restoration"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose a cube over a given partition into low-rank L and sparse E.
    Decompose(DecomposeArgs),
    /// Segment a cube into superpixels.
    Segment(SegmentArgs),
    /// Run the full classification pipeline.
    Classify(ClassifyArgs),
    /// Score a predictions raster against a ground-truth raster.
    Metrics(MetricsArgs),
}

/// Options shared with run config files. Flags override `--config` values.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` run config providing defaults.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Named parameter preset: indian_pines, salinas or pavia_university.
    #[arg(long)]
    pub preset: Option<String>,
    /// Cube manifest (JSON).
    #[arg(long)]
    pub cube: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<String>,
    /// Sparse-error weight.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Discriminability weight.
    #[arg(long)]
    pub beta: Option<String>,
    /// Initial penalty.
    #[arg(long)]
    pub mu0: Option<String>,
    /// Penalty growth factor.
    #[arg(long)]
    pub rho: Option<String>,
    /// Penalty cap.
    #[arg(long = "mu-max")]
    pub mu_max: Option<String>,
    /// Residual tolerance.
    #[arg(long)]
    pub eps: Option<String>,
    /// Iteration cap per decomposition.
    #[arg(long = "max-iter")]
    pub max_iter: Option<String>,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Partition raster (one superpixel id per pixel).
    #[arg(long)]
    partition: Option<std::path::PathBuf>,
    /// Min-max normalize the cube before decomposing.
    #[arg(long)]
    normalize: bool,
    /// Exit with status 3 if the solver hits its iteration cap.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Target number of superpixels.
    #[arg(long)]
    superpixels: Option<String>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Ground-truth label raster.
    #[arg(long)]
    labels: Option<String>,
    /// Number of segment + decompose rounds.
    #[arg(long = "t-max")]
    t_max: Option<String>,
    /// Initial number of superpixels.
    #[arg(long)]
    superpixels: Option<String>,
    /// Dominant-class share below which a superpixel is split.
    #[arg(long)]
    delta: Option<String>,
    /// Sub-superpixels per split.
    #[arg(long = "m-split")]
    m_split: Option<String>,
    /// knn or nearest-centroid.
    #[arg(long)]
    classifier: Option<String>,
    /// Neighbours for knn.
    #[arg(long)]
    k: Option<String>,
    /// Fraction of each class used for training, e.g. 0.05.
    #[arg(long = "train-percent")]
    train_percent: Option<String>,
    /// Seed for the training split.
    #[arg(long, required = true)]
    seed: u64,
    /// Exit with status 3 if any decomposition hits its iteration cap.
    #[arg(long)]
    strict: bool,
    /// Also write every round's partition and predictions.
    #[arg(long = "dump-rounds")]
    dump_rounds: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Predictions raster.
    #[arg(long, required = true)]
    predictions: std::path::PathBuf,
    /// Ground-truth raster; pixels labeled 0 are not scored.
    #[arg(long, required = true)]
    truth: std::path::PathBuf,
    /// Write metrics.json here instead of printing it.
    #[arg(long)]
    output: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Decompose(a) => {
            commands::decompose(&a.config, a.partition.as_deref(), a.normalize, a.strict)
        }
        Command::Segment(a) => commands::segment(&a.config, a.superpixels.as_deref()),
        Command::Classify(a) => {
            let extra = [
                ("labels", a.labels),
                ("t_max", a.t_max),
                ("superpixels", a.superpixels),
                ("delta", a.delta),
                ("m_split", a.m_split),
                ("classifier", a.classifier),
                ("k", a.k),
                ("train_percent", a.train_percent),
                ("seed", Some(a.seed.to_string())),
            ];
            commands::classify(&a.config, &extra, a.strict, a.dump_rounds)
        }
        Command::Metrics(a) => commands::metrics(&a.predictions, &a.truth, a.output.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("spdlrr: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::NotConverged(_) => 3,
        }
    }
}
