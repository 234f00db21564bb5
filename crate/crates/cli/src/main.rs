//! `framesed` command-line tool. Every pipeline stage is a subcommand; all
//! randomness comes from `--seed`.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "framesed", version, about = "Frame-level sound event detection toolkit")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize strong labels into per-clip frame targets.
    Rasterize(RasterizeArgs),
    /// Compute class-balanced clip sampling weights.
    Weights(WeightsArgs),
    /// Draw clips according to a weights file.
    Sample(SampleArgs),
    /// Augment a spectrogram.
    Augment(AugmentArgs),
    /// Resample embedding sequences to a fixed frame count.
    Resample(ResampleArgs),
    /// Average member logits into soft distillation targets.
    DistillTargets(DistillArgs),
    /// Train a linear probe on frozen embeddings.
    ProbeTrain(ProbeArgs),
    /// Median-filter scores and optionally decode events.
    Postprocess(PostprocessArgs),
    /// Threshold-independent PSDS evaluation.
    EvalPsds(PsdsArgs),
    /// Onset F-measure evaluation.
    EvalOnsetF(OnsetArgs),
    /// Almost Stochastic Order significance test.
    Aso(AsoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Tsv,
    Binary,
}

impl From<Format> for framesed::io::MatrixFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Tsv => framesed::io::MatrixFormat::Tsv,
            Format::Binary => framesed::io::MatrixFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Any,
    Majority,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyClips {
    Skip,
    Min,
}

/// Clip durations: one value for every clip, or a `filename duration` TSV.
#[derive(Debug, Args, Serialize)]
pub struct DurationArgs {
    #[arg(long, default_value_t = 10.0, conflicts_with = "durations")]
    pub clip_duration: f64,
    #[arg(long)]
    pub durations: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RasterizeArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 0.04)]
    pub resolution: f64,
    #[command(flatten)]
    pub durations: DurationArgs,
    /// Clamp events running past the clip end instead of rejecting them.
    #[arg(long)]
    pub clamp: bool,
    #[arg(long, value_enum, default_value_t = Rule::Any)]
    pub rule: Rule,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[command(flatten)]
    pub durations: DurationArgs,
    #[arg(long)]
    pub clamp: bool,
    #[arg(long, value_enum, default_value_t = Aggregate::Sum)]
    pub aggregate: Aggregate,
    #[arg(long, value_enum, default_value_t = EmptyClips::Skip)]
    pub empty: EmptyClips,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Spectrogram in SEDB format (`F × T`).
    #[arg(long)]
    pub input: PathBuf,
    /// Second spectrogram for mixup and Freq-MixStyle.
    #[arg(long)]
    pub partner: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub mixup_alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    pub fms_alpha: f64,
    #[arg(long, default_value_t = 0.4)]
    pub fms_prob: f64,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [2, 5])]
    pub filter_bands: Vec<usize>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [-6.0, 6.0], allow_negative_numbers = true)]
    pub filter_db: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [0.9, 1.1])]
    pub warp_range: Vec<f64>,
    #[arg(long)]
    pub no_mixup: bool,
    #[arg(long)]
    pub no_fms: bool,
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub no_warp: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ResampleArgs {
    /// Directory of per-clip SEDB embedding files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DistillArgs {
    /// Directories of per-clip logit files, one per ensemble member.
    #[arg(long, num_args = 1.., required = true)]
    pub members: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    /// Directory of per-clip SEDB embeddings.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Directory of per-clip hard targets (TSV, or SEDB with `--vocab`).
    #[arg(long)]
    pub targets: PathBuf,
    /// Directory of per-clip soft targets.
    #[arg(long)]
    pub soft: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0.0)]
    pub final_lr: f64,
    /// Beta parameter for mixup; omit to disable mixup.
    #[arg(long)]
    pub mixup_alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output head parameters (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Embeddings to score with the trained head.
    #[arg(long, requires = "predictions_out")]
    pub predict: Option<PathBuf>,
    /// Directory for probability score files of `--predict`.
    #[arg(long, requires = "predict")]
    pub predictions_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
}

/// How per-clip score files are read.
#[derive(Debug, Args, Serialize)]
pub struct ScoreInput {
    /// Directory of per-clip score files (TSV or SEDB).
    #[arg(long)]
    pub scores: PathBuf,
    /// Class list; required for SEDB score files.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Frame length of SEDB score files in seconds.
    #[arg(long, default_value_t = 0.04)]
    pub resolution: f64,
    /// Scores are logits; apply the sigmoid on load.
    #[arg(long)]
    pub logits: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PostprocessArgs {
    #[command(flatten)]
    pub input: ScoreInput,
    #[arg(long)]
    pub median_filter: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Decode events at this threshold into `--events-out`.
    #[arg(long, requires = "events_out")]
    pub threshold: Option<f64>,
    #[arg(long, requires = "threshold")]
    pub events_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct PsdsArgs {
    #[command(flatten)]
    pub input: ScoreInput,
    /// Ground-truth events TSV.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub dtc: f64,
    #[arg(long, default_value_t = 0.7)]
    pub gtc: f64,
    #[arg(long, default_value_t = 100.0)]
    pub emax: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha_st: f64,
    /// Evaluate only these classes (one name per line).
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub median_filter: Option<f64>,
    /// Leave classes without ground truth out instead of scoring them TPR = 1.
    #[arg(long)]
    pub exclude_missing: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OnsetArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AsoArgs {
    /// Scores of system A, one per line.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub comparisons: usize,
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input content or flags: exit 1.
    Validation(String),
    /// Filesystem failure: exit 2.
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<framesed::Error> for CliError {
    fn from(e: framesed::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Rasterize(a) => commands::rasterize(&a),
        Command::Weights(a) => commands::weights(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::Resample(a) => commands::resample(&a),
        Command::DistillTargets(a) => commands::distill_targets(&a),
        Command::ProbeTrain(a) => commands::probe_train(&a),
        Command::Postprocess(a) => commands::postprocess(&a),
        Command::EvalPsds(a) => commands::eval_psds(&a),
        Command::EvalOnsetF(a) => commands::eval_onset_f(&a),
        Command::Aso(a) => commands::aso(&a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
