//! `kmpn`: data preparation, training, evaluation and diagnostics.

mod commands;
mod config;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "kmpn", version, about = "Knowledge-graph meta-preference recommender")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Shared {
    /// Dataset directory.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory; receives run.meta and all artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed. Without it, --deterministic uses 7 and other runs draw
    /// one from the OS.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// key=value file merged under explicit flags (a run.meta works).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a dataset directory and print its summary.
    Prepare,
    /// Generate the clustered synthetic dataset.
    Synth(SynthArgs),
    /// Train kmpn, ckmpn or the content model.
    Train(TrainArgs),
    /// Rank the full catalog and report top-K metrics.
    Eval(EvalArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write user and item embeddings of a trained content model.
    ExportContent(ExportArgs),
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub cold_fraction: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Kmpn,
    Ckmpn,
    Content,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub n_pref: Option<usize>,
    #[arg(long)]
    pub n_meta: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda_cs: Option<f64>,
    #[arg(long)]
    pub content_items: Option<PathBuf>,
    #[arg(long)]
    pub content_users: Option<PathBuf>,
    /// Content model hash buckets.
    #[arg(long)]
    pub buckets: Option<usize>,
    /// Content model history sample size.
    #[arg(long)]
    pub history: Option<usize>,
    /// Content model negatives per impression.
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Evaluate on the validation split every N epochs (kmpn/ckmpn).
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub split: Option<String>,
    /// Comma-separated cutoffs.
    #[arg(long)]
    pub k: Option<String>,
    /// kmpn or content checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate fixed embedding files instead of a checkpoint.
    #[arg(long)]
    pub content_users: Option<PathBuf>,
    #[arg(long)]
    pub content_items: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradKind {
    Kmpn,
    Ckmpn,
    Content,
    All,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Model to check [default: all].
    #[arg(long, value_enum)]
    pub kind: Option<GradKind>,
    /// Maximum relative error [default: 1e-4].
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Text,
    Binary,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Content checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// [default: text]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
