mod args;
mod commands;

use clap::{Args, Parser, Subcommand};
use execsizer::allocsim::{DEFAULT_IDLE_TIMEOUT, DEFAULT_RAMP_INTERVAL};
use execsizer::select::NodeShape;
use execsizer::PpmFamily;
use std::path::PathBuf;
use std::process::ExitCode;

use args::{CurvePoints, Grid, Numbers, PolicySpec};

/// Executor sizing for analytical queries: learn runtime-vs-executors
/// models from plan features, pick allocations, and replay allocation
/// policies.
#[derive(Parser, Debug)]
#[command(name = "execsizer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a parameter model from a workload file.
    Train(TrainArgs),
    /// Predict model parameters and runtime curves for each query.
    Predict(PredictArgs),
    /// Choose an executor count and cores-per-executor split.
    Select(SelectArgs),
    /// Replay allocation policies and compare executor skylines.
    Simulate(SimulateArgs),
    /// Repeated k-fold cross-validation, optionally with feature ablation.
    Evaluate(EvaluateArgs),
    /// Permutation feature importance of a trained model.
    Importance(ImportanceArgs),
    /// Write a synthetic workload file.
    GenSynthetic(GenArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Workload file (JSON lines).
    #[arg(long)]
    pub workload: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Model family: pl (power law) or al (Amdahl).
    #[arg(long, default_value = "pl", value_parser = args::parse_family)]
    pub ppm: PpmFamily,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of trees.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Allocations at which training curves are built from profiles.
    #[arg(long, default_value = "1,3,8,16,32,48", value_parser = args::parse_grid)]
    pub grid: Grid,
    /// Cores per executor of the profiled runs.
    #[arg(long, default_value_t = 4)]
    pub ec: u32,
    /// Train on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Queries to score (workload JSON lines; curves and profiles are ignored).
    #[arg(long)]
    pub workload: PathBuf,
    /// Allocations at which to materialize each predicted curve.
    #[arg(long, default_value = "1..48", value_parser = args::parse_grid)]
    pub grid: Grid,
    /// Fail when a query has operators the model has never seen.
    #[arg(long)]
    pub strict: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["params", "curve", "model"]))]
pub struct SelectArgs {
    /// Model parameters in family order (a,b,m or s,p).
    #[arg(long, value_parser = args::parse_f64_list, allow_hyphen_values = true)]
    pub params: Option<Numbers>,
    /// Family of --params.
    #[arg(long, default_value = "pl", value_parser = args::parse_family)]
    pub ppm: PpmFamily,
    /// Measured curve as n:t pairs, interpolated linearly.
    #[arg(long, value_parser = args::parse_curve)]
    pub curve: Option<CurvePoints>,
    /// Trained model; requires --workload.
    #[arg(long, requires = "workload")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Smallest n within factor H of the minimum runtime.
    #[arg(long, value_name = "H", conflicts_with = "elbow")]
    pub max_slowdown: Option<f64>,
    /// Elbow of the runtime curve (the default objective).
    #[arg(long)]
    pub elbow: bool,
    /// Executor range considered.
    #[arg(long, default_value = "1..48", value_parser = args::parse_grid)]
    pub grid: Grid,
    /// Node shape C,M,em: cores, memory GB, memory GB per executor.
    #[arg(long, value_parser = args::parse_node)]
    pub node: Option<NodeShape>,
    /// Cores per executor behind the model's n; k = n * ec.
    #[arg(long, default_value_t = 4)]
    pub ec: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Workload file; records need a profile.
    #[arg(long)]
    pub workload: PathBuf,
    /// Policy: sa:N, da:MIN,MAX, rule:N or rule:auto. Repeat for each column.
    #[arg(long = "policy", required = true, value_parser = args::parse_policy)]
    pub policies: Vec<PolicySpec>,
    /// Index of the baseline policy among --policy flags.
    #[arg(long, default_value_t = 0)]
    pub baseline: usize,
    /// Model used by rule:auto.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Slowdown threshold used by rule:auto.
    #[arg(long, value_name = "H", default_value_t = 1.05, conflicts_with = "elbow")]
    pub max_slowdown: f64,
    /// Use the elbow objective for rule:auto instead.
    #[arg(long)]
    pub elbow: bool,
    /// Executor range searched by rule:auto.
    #[arg(long, default_value = "1..48", value_parser = args::parse_grid)]
    pub grid: Grid,
    /// Seconds between grant batches.
    #[arg(long, default_value_t = 5.0)]
    pub lag: f64,
    /// Executors per grant batch.
    #[arg(long, default_value_t = 5)]
    pub batch: u32,
    /// Executors available to one query.
    #[arg(long, default_value_t = 256)]
    pub capacity: u32,
    /// Seconds before an idle executor is released.
    #[arg(long, default_value_t = DEFAULT_IDLE_TIMEOUT)]
    pub idle_timeout: f64,
    /// Seconds of backlog between dynamic-allocation ramp steps.
    #[arg(long, default_value_t = DEFAULT_RAMP_INTERVAL)]
    pub ramp_interval: f64,
    /// Executors rule policies hold at launch.
    #[arg(long, default_value_t = 1)]
    pub rule_start: u32,
    /// Cores (task slots) per executor.
    #[arg(long, default_value_t = 4)]
    pub ec: u32,
    /// Seed recorded for rule:auto runs (the simulator itself is deterministic).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub workload: PathBuf,
    /// Model family: pl, al or both.
    #[arg(long, default_value = "both")]
    pub ppm: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Allocations at which the error metric is reported.
    #[arg(long, default_value = "1,3,8,16,32,48", value_parser = args::parse_grid)]
    pub grid: Grid,
    /// Slowdown thresholds evaluated next to the elbow objective.
    #[arg(long, default_value = "1.05,1.1,1.25", value_parser = args::parse_f64_list)]
    pub slowdowns: Numbers,
    #[arg(long, default_value_t = 4)]
    pub ec: u32,
    /// Feature subset for ablation, name=f1,f2,... (repeatable).
    #[arg(long = "subset", value_parser = args::parse_subset)]
    pub subsets: Vec<(String, Vec<String>)>,
    /// Run folds on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Workload whose fitted parameters serve as targets.
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "1,3,8,16,32,48", value_parser = args::parse_grid)]
    pub grid: Grid,
    #[arg(long, default_value_t = 4)]
    pub ec: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 103)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative standard deviation of measurement noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Allocations of the measured curves.
    #[arg(long, default_value = "1,3,8,16,32,48", value_parser = args::parse_grid)]
    pub grid: Grid,
    #[arg(long, default_value_t = 4)]
    pub ec: u32,
    /// Output workload file.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Select(a) => commands::select(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Importance(a) => commands::importance(&a),
        Command::GenSynthetic(a) => commands::gen_synthetic(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.kind.code())
        }
    }
}
