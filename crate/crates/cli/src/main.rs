//! `sdfa`: preprocess keypoints, generate synthetic data, train, evaluate,
//! run inference and count model cost.
//!
//! Failures print a single `error: kind=<kind> msg="<message>"` line on
//! stderr. Usage errors exit with 2, everything else with 1.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "sdfa", version, about = "Skeleton-based fall detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert OpenPose keypoint folders into a sequence file.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic fall / daily-activity dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test part of a split.
    Eval(EvalArgs),
    /// Print the fall probability of every sequence in a file.
    Infer(InferArgs),
    /// Print parameter and multiply-accumulate counts.
    Flops(FlopsArgs),
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// A folder of per-frame keypoint files, or a folder of such folders.
    pub in_dir: PathBuf,
    pub out_file: PathBuf,
    /// Label sequences without a meta.json as falls.
    #[arg(long, conflicts_with = "adl")]
    pub fall: bool,
    /// Label sequences without a meta.json as daily activities.
    #[arg(long)]
    pub adl: bool,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f32,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// TOML file with generator settings; defaults are used when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Split, e.g. `seventy_thirty`, `cross_view:2,3`, `cross_fall:forward@7`.
    #[arg(long, default_value = "seventy_thirty")]
    pub split: String,
    /// Key-value configuration file; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "out-checkpoint")]
    pub out_checkpoint: PathBuf,
    /// Seeds initialization, shuffling, masking and the split.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "seventy_thirty")]
    pub split: String,
    /// Results table to write.
    #[arg(long)]
    pub report: PathBuf,
    /// Overrides the configuration recorded when the checkpoint was trained.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub sequence: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FlopsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input length in frames.
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
}

fn quote(msg: &str) -> String {
    msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: kind=usage msg=\"{}\"", quote(first));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Flops(a) => commands::flops(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} msg=\"{}\"", e.kind(), quote(&e.to_string()));
            ExitCode::from(if e.kind() == "usage" { 2 } else { 1 })
        }
    }
}
