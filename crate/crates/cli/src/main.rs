//! `dyad`: simulate a couples corpus and run the emotion-recognition pipeline
//! over it.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dyad", version, about = "Dyadic smartwatch emotion-recognition simulator and pipeline")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the sensing protocol and write a corpus.
    Simulate(SimulateArgs),
    /// Select sessions and condition their signals.
    Preprocess(CorpusArgs),
    /// Select, condition and extract feature tables.
    Extract(ExtractArgs),
    /// Fit one model on every sample of one gender.
    Train(TrainArgs),
    /// Cross-validate the modality grid on an extracted dataset.
    Eval(EvalArgs),
    /// Run selection, extraction and evaluation end to end.
    Pipeline(PipelineArgs),
    /// Check annotations and transcripts, or compute an ICC.
    Qa(QaArgs),
    /// Print the funnel and the results table of an output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `seed` (and DYAD_SEED).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    couples: Option<u32>,
    #[arg(long)]
    days: Option<u32>,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// `lite` or `ingest:<file>`.
    #[arg(long, default_value = "lite")]
    acoustic: String,
    /// `hash:<dim>` or `ingest:<file>`.
    #[arg(long, default_value = "hash:128")]
    linguistic: String,
    /// Whose transcript feeds hashed text features: `wearer` or `both`.
    #[arg(long, default_value = "wearer")]
    text_scope: String,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    io: CorpusArgs,
    #[command(flatten)]
    features: FeatureArgs,
    /// Comma-separated modalities to extract.
    #[arg(long, default_value = "physio,movement,acoustic,linguistic")]
    modalities: String,
}

#[derive(Args, Clone)]
pub struct GridArgs {
    /// Flat config with `seed` and `grid.*` keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `male`, `female` or `both`.
    #[arg(long, default_value = "both")]
    gender: String,
    /// `arousal`, `valence` or `both`.
    #[arg(long, default_value = "both")]
    target: String,
    /// Comma-separated rows, each a `+`-joined modality set; default is the
    /// seven standard rows.
    #[arg(long)]
    modalities: Option<String>,
    /// Overrides `seed` (and DYAD_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `extract`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// `linear_svm` or `random_forest`.
    #[arg(long, default_value = "linear_svm")]
    model: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    io: CorpusArgs,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct QaArgs {
    #[arg(long, requires = "out")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Items × raters CSV; prints its ICC.
    #[arg(long)]
    icc: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    out: PathBuf,
}

/// A failure classified by exit code.
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<dyad_core::Error> for Failure {
    fn from(e: dyad_core::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_pool(cli.jobs).and_then(|_| match cli.command {
        Command::Simulate(a) => commands::simulate(&a.config, &a.out, a.seed, a.couples, a.days),
        Command::Preprocess(a) => commands::preprocess(&a.corpus, &a.out),
        Command::Extract(a) => commands::extract(
            &a.io.corpus,
            &a.io.out,
            &commands::feature_options(&a.features.acoustic, &a.features.linguistic, &a.features.text_scope)?,
            &a.modalities,
        ),
        Command::Train(a) => commands::train(&a.dataset, &a.out, &a.grid, &a.model),
        Command::Eval(a) => commands::eval(&a.dataset, &a.out, &a.grid),
        Command::Pipeline(a) => commands::pipeline(
            &a.io.corpus,
            &a.io.out,
            commands::feature_options(&a.features.acoustic, &a.features.linguistic, &a.features.text_scope)?,
            &a.grid,
        ),
        Command::Qa(a) => commands::qa(a.corpus.as_deref(), a.out.as_deref(), a.icc.as_deref()),
        Command::Report(a) => commands::report(&a.out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}

fn configure_pool(jobs: Option<usize>) -> Result<(), Failure> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}
