//! Command-line surface for the intention-tracking pipeline: graph building,
//! tracking replay, metric evaluation, and grasp computation.
//!
//! Exit codes: 0 success, 1 runtime/provider failure, 2 usage or input error
//! (missing files, malformed inputs, invalid configuration).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FlagOverrides, RunConfig};

/// A command failure with its exit class.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or bad input files; exit code 2.
    Usage(String),
    /// The pipeline started but could not finish; exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<lit_core::taskgraph::GraphError> for CliError {
    fn from(e: lit_core::taskgraph::GraphError) -> Self {
        use lit_core::taskgraph::GraphError;
        match e {
            GraphError::SchemaViolation { .. } | GraphError::InvalidMatrix(_) => {
                CliError::Usage(e.to_string())
            }
            GraphError::UnparsableReply(_) | GraphError::Provider(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<lit_core::tracker::TrackError> for CliError {
    fn from(e: lit_core::tracker::TrackError) -> Self {
        use lit_core::tracker::TrackError;
        match e {
            TrackError::Lpgm(_) | TrackError::Similarity(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "lit",
    version,
    about = "Track language-described intentions over a task graph",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalFlags {
    /// JSON config file; flags override it, it overrides the environment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Embedding provider: mock, remote, or static:<word-vector-file>.
    #[arg(long, global = true)]
    provider: Option<String>,
    /// Similarity metric (mean-cos or bertscore-f1); repeat for eval.
    #[arg(long, global = true)]
    metric: Vec<String>,
    /// Score-to-likelihood map: exp-temperature or affine-clamp.
    #[arg(long, global = true)]
    map: Option<String>,
    /// Temperature of the exp-temperature likelihood map.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Measurement window length conditioned on by the oracles.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Sample count for Monte Carlo transition estimation.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Diagonal weight of the fixed transition matrix.
    #[arg(long = "p-stay", global = true)]
    p_stay: Option<f64>,
    /// Seed for the scripted mock's sampler.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Session script driving the scripted chat/embedding mock.
    #[arg(long = "mock-script", global = true)]
    mock_script: Option<PathBuf>,
    /// Transition source: lpgm-method3 or fixed-matrix.
    #[arg(long, global = true)]
    transition: Option<String>,
    /// Directory for the content-addressed response cache.
    #[arg(long = "cache-dir", global = true)]
    cache_dir: Option<PathBuf>,
    /// Append every oracle call to this JSONL transcript.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate task steps and reversibility edges, then write graph JSON.
    BuildGraph {
        /// The overall task prompt, e.g. "make a salad".
        #[arg(long)]
        task: String,
        /// File listing the available objects, one per line.
        #[arg(long)]
        objects: PathBuf,
        /// Output path for the task-graph JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the filter over a measurement stream.
    Track {
        /// Task-graph JSON produced by build-graph.
        #[arg(long)]
        graph: PathBuf,
        /// Measurement JSONL file, or '-' for standard input.
        #[arg(long)]
        measurements: String,
        /// Output path for the per-step trace JSONL.
        #[arg(long = "out-trace", default_value = "trace.jsonl")]
        out_trace: PathBuf,
        /// Output path for the per-step posterior CSV.
        #[arg(long = "out-csv", default_value = "posteriors.csv")]
        out_csv: PathBuf,
        /// Print object-delivery recommendations as PassAction JSONL.
        #[arg(long)]
        recommend: bool,
        /// Read one acknowledgment line per recommendation from stdin.
        #[arg(long)]
        confirm: bool,
    },
    /// Compare similarity metrics on identical inputs (fixed transitions).
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        /// Directory for the per-metric posterior CSVs.
        #[arg(long = "out-dir", default_value = "eval-out")]
        out_dir: PathBuf,
    },
    /// Compute a top-down grasp pose from a CSV of x,y points.
    Grasp {
        /// CSV with one "x,y" row per point.
        #[arg(long)]
        points: PathBuf,
        /// Write the pose JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn flag_overrides(global: &GlobalFlags) -> FlagOverrides {
    FlagOverrides {
        config: global.config.clone(),
        provider: global.provider.clone(),
        metric: global.metric.clone(),
        map: global.map.clone(),
        temperature: global.temperature,
        window: global.window,
        samples: global.samples,
        p_stay: global.p_stay,
        seed: global.seed,
        mock_script: global.mock_script.clone(),
        transition: global.transition.clone(),
        cache_dir: global.cache_dir.clone(),
        transcript: global.transcript.clone(),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&flag_overrides(&cli.global))?;
    match &cli.command {
        Command::BuildGraph { task, objects, out } => {
            commands::build_graph::run(&cfg, task, objects, out)
        }
        Command::Track {
            graph,
            measurements,
            out_trace,
            out_csv,
            recommend,
            confirm,
        } => commands::track::run(
            &cfg,
            &commands::track::TrackArgs {
                graph,
                measurements,
                out_trace,
                out_csv,
                recommend: *recommend,
                confirm: *confirm,
            },
        ),
        Command::Eval {
            graph,
            measurements,
            out_dir,
        } => commands::eval::run(
            &cfg,
            &commands::eval::EvalArgs {
                graph,
                measurements,
                out_dir,
            },
        ),
        Command::Grasp { points, out } => commands::grasp::run(points, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
