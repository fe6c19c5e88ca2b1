//! Command-line front end.
//!
//! Exit codes: 0 success (or accept), 1 reject, 2 error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{FileConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "eigenbio", version, about = "Face and ear eigenspace recognition with decision-level fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train face and ear eigenspace models from the training split.
    Train(TrainArgs),
    /// Project training samples (or given images) into the enrollment store.
    Enroll(EnrollArgs),
    /// Verify a claimed identity from face and ear probes.
    Verify(VerifyArgs),
    /// Identify the subject behind face and ear probes.
    Identify(IdentifyArgs),
    /// Sweep thresholds over the probe split and report face, ear and fused rates.
    Evaluate(EvaluateArgs),
    /// Sweep thresholds over precomputed genuine and impostor scores.
    Sweep(SweepArgs),
}

/// Flags shared by every pipeline command. Each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub face_model: Option<PathBuf>,
    #[arg(long)]
    pub ear_model: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub face_threshold: Option<f64>,
    #[arg(long)]
    pub ear_threshold: Option<f64>,
    /// Minimum normalized cross-correlation with the mean image (0 disables the gate).
    #[arg(long)]
    pub min_ncc: Option<f64>,
    /// Probe samples per modality.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Accepting votes needed within a modality.
    #[arg(long)]
    pub majority: Option<usize>,
    /// Per-subject TRAIN:PROBE sample counts.
    #[arg(long)]
    pub split: Option<String>,
    /// Shuffle each subject's samples before splitting.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Face image size as WIDTHxHEIGHT.
    #[arg(long)]
    pub face_size: Option<String>,
    /// Ear image size as WIDTHxHEIGHT.
    #[arg(long)]
    pub ear_size: Option<String>,
    /// verification or identification.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Worker threads for scoring (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Upper bound on retained components.
    #[arg(long)]
    pub components: Option<usize>,
    /// Cumulative eigenvalue fraction to retain.
    #[arg(long)]
    pub variance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Enroll only this subject from the given images, adding to an existing store.
    #[arg(long, requires_all = ["face", "ear"])]
    pub subject: Option<String>,
    #[arg(long, num_args = 1..)]
    pub face: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub ear: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Claimed subject label.
    #[arg(long)]
    pub claim: String,
    #[arg(long, num_args = 1.., required = true)]
    pub face: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub ear: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, num_args = 1.., required = true)]
    pub face: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub ear: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory for curves and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// One genuine distance per line.
    #[arg(long)]
    pub genuine: PathBuf,
    /// One impostor distance per line.
    #[arg(long)]
    pub impostor: PathBuf,
    /// Comma-separated ascending thresholds; defaults to every distinct score.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// CSV output file; defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    run_cli(cli, &mut std::io::stdout().lock())
}

pub fn run_cli(cli: Cli, out: &mut dyn std::io::Write) -> i32 {
    match commands::dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
