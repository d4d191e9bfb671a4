//! `dmlab`: synthesize judgement streams, run the benchmark, train and
//! evaluate the A2C decision maker, search hyperparameters, build comparison
//! reports and serve the operator study.

mod commands;
mod io;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmlab_core::env::EpisodeMode;

#[derive(Parser, Debug)]
#[command(name = "dmlab", version, about = "Structured disaster-management decision lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic judgement records per level plus a calibration report.
    Synth(SynthArgs),
    /// Run the argmax benchmark agent.
    Benchmark(BenchmarkArgs),
    /// Train the A2C decision maker.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Hyperparameter grid search.
    Gridsearch(GridArgs),
    /// Comparison table from per-scenario CSVs and service logs.
    Report(ReportArgs),
    /// Serve the operator study HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Terminate,
    Continue,
}

impl From<ModeArg> for EpisodeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Terminate => EpisodeMode::TerminateOnWrong,
            ModeArg::Continue => EpisodeMode::ContinueThrough,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// `all` or a comma-separated list of level ids.
    #[arg(long)]
    pub levels: Option<String>,
    /// Records per level.
    #[arg(long)]
    pub n: Option<usize>,
    /// `calibrated`, `identity` or a confusion-spec JSON file.
    #[arg(long)]
    pub specs: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    /// `calibrated`, `identity`, a records `.jsonl` file or a source config `.json`.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub total_steps: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub ent_coef: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub n_envs: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint file, or a training output directory holding `checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Sample actions instead of taking the most probable one.
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub n_combos: Option<usize>,
    #[arg(long)]
    pub seeds_per_combo: Option<u64>,
    #[arg(long)]
    pub steps_per_trial: Option<u64>,
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// `LABEL=scenarios.csv`, repeatable; rows keep this order.
    #[arg(long = "group")]
    pub groups: Vec<String>,
    /// Service event log; adds per-role, most-scenarios and collective rows.
    #[arg(long)]
    pub service_log: Option<PathBuf>,
    /// Per-scenario CSV of the RL agent, appended as the last row.
    #[arg(long)]
    pub rl: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Records `.jsonl` with a validation split.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<SocketAddr>,
    /// Event log and snapshot directory.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Directory served under `/media`.
    #[arg(long)]
    pub media_dir: Option<PathBuf>,
    /// Checkpoint evaluated on the validation pool for the RL report row.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub rl_scenarios: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gridsearch(a) => commands::gridsearch(a),
        Command::Report(a) => commands::report(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
