//! `pvk`: reproducible pipelines over token corpora and training order.

mod commands;
mod config;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pvk_core::ErrorClass;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(pvk_core::Error),
}

impl From<pvk_core::Error> for CliError {
    fn from(e: pvk_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Io => 1,
                ErrorClass::Format => 3,
                ErrorClass::Contract => 4,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "pvk", version, about = "Training-data provenance toolkit")]
struct Cli {
    /// Worker threads for parallel stages. Never changes output bytes.
    #[arg(long, global = true, env = "PVK_THREADS")]
    threads: Option<usize>,

    /// JSON config file (or a run.json from an earlier run). Flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Data-order plan flags shared by every command that walks the stream.
#[derive(Args, Debug, Clone, Default)]
pub struct PlanArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<u64>,
    #[arg(long)]
    pub seq_len: Option<u64>,
    #[arg(long)]
    pub train_iters: Option<u64>,
    /// Token appended after every document before chunking.
    #[arg(long)]
    pub eod_token: Option<u32>,
    #[arg(long, alias = "save-interval")]
    pub interval: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutArgs {
    /// Output directory; run.json and all results go here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize texts into a .bin/.idx corpus.
    BuildDataset(commands::BuildDatasetArgs),
    /// Dump the batches of a step range in training order.
    Reconstruct(commands::ReconstructArgs),
    /// Print checkpoint steps, one per line.
    Schedule(commands::ScheduleArgs),
    /// Near-duplicate clustering with MinHash LSH.
    Dedup(commands::DedupArgs),
    /// Memorization scan of every training sequence.
    ScanMem(commands::ScanMemArgs),
    /// Poisson goodness of fit for per-slice counts.
    FitPoisson(commands::FitPoissonArgs),
    /// Term counts over the data seen up to each checkpoint.
    CountFreq(commands::CountFreqArgs),
    /// Join counts with accuracies; bins and performance gap.
    GapReport(commands::GapReportArgs),
    /// Write the counterfactual stream with pronouns swapped at the end of training.
    SwapPronouns(commands::SwapPronounsArgs),
    /// CrowS-Pairs and WinoBias scores from per-item model scores.
    ScoreBias(commands::ScoreBiasArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::BuildDataset(a) => commands::build_dataset(cfg, a),
        Command::Reconstruct(a) => commands::reconstruct(cfg, a),
        Command::Schedule(a) => commands::schedule(cfg, a),
        Command::Dedup(a) => commands::dedup(cfg, a),
        Command::ScanMem(a) => commands::scan_mem(cfg, a),
        Command::FitPoisson(a) => commands::fit_poisson(cfg, a),
        Command::CountFreq(a) => commands::count_freq(cfg, a),
        Command::GapReport(a) => commands::gap_report(cfg, a),
        Command::SwapPronouns(a) => commands::swap_pronouns(cfg, a),
        Command::ScoreBias(a) => commands::score_bias(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pvk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
