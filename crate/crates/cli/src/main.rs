//! `analogues` command-line driver.
//!
//! Every subcommand writes its outputs and a `run.json` with the resolved
//! configuration into `--out`. Exit codes: 0 success, 1 invalid input or
//! configuration, 2 filesystem failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use analogues::gbdt::TrainConfig;
use analogues::synthgen::DEFAULT_SNR;

#[derive(Debug, Parser)]
#[command(name = "analogues", version, about = "Analogues search for drilling accidents on MWD telemetry")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic lesson corpus (and optional hold-out wells).
    Gen(GenArgs),
    /// Train the similarity model on every lesson pair of a manifest.
    Train(TrainArgs),
    /// Well-disjoint cross-validation: ROC/PR curves and pooled metrics.
    EvalCv(EvalCvArgs),
    /// Replay wells through the detector and write the alarm log.
    Replay(ReplayArgs),
    /// Score an alarm log against ground-truth events.
    ScoreAlarms(ScoreAlarmsArgs),
    /// Replay wells once and count TP/FP over a grid of thresholds.
    Sweep(SweepArgs),
    /// Dendrogram of lesson similarities.
    Cluster(ClusterArgs),
    /// Similarity distributions of distorted lessons and the R table.
    Robust(RobustArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the built-in 94-lesson composition.
    #[arg(long, conflicts_with = "composition", required_unless_present = "composition")]
    table1_default: bool,
    /// JSON array of {accident_type, operation, count}.
    #[arg(long)]
    composition: Option<PathBuf>,
    /// Signature strength relative to baseline noise.
    #[arg(long, default_value_t = DEFAULT_SNR)]
    snr: f64,
    /// Hold-out wells with one accident each.
    #[arg(long, default_value_t = 0)]
    holdout_accident: usize,
    /// Accident-free hold-out wells.
    #[arg(long, default_value_t = 0)]
    holdout_normal: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct LayoutArgs {
    /// Trailing feature windows in ticks, largest first.
    #[arg(long, value_delimiter = ',', default_values_t = [720usize, 360, 180, 60])]
    windows: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
struct GbdtArgs {
    #[arg(long, default_value_t = 200)]
    n_trees: usize,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    min_samples_leaf: usize,
    #[arg(long, default_value_t = 0.8)]
    row_subsample: f64,
    #[arg(long, default_value_t = 0.8)]
    feature_subsample: f64,
    /// Seed of row and feature subsampling.
    #[arg(long, default_value_t = 0)]
    train_seed: u64,
}

impl GbdtArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            min_samples_leaf: self.min_samples_leaf,
            row_subsample: self.row_subsample,
            feature_subsample: self.feature_subsample,
            seed: self.train_seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Model file; defaults to `<out>/model.json`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    gbdt: GbdtArgs,
    #[command(flatten)]
    #[serde(flatten)]
    layout: LayoutArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CvModeArg {
    RandomWells,
    LeaveOneWellOut,
}

#[derive(Debug, Args, Serialize)]
struct EvalCvArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "random-wells")]
    mode: CvModeArg,
    /// Number of random splits.
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0.25)]
    test_fraction: f64,
    /// Seed of the well splits.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threshold of the reported confusion matrix.
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    #[command(flatten)]
    #[serde(flatten)]
    gbdt: GbdtArgs,
    #[command(flatten)]
    #[serde(flatten)]
    layout: LayoutArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DetectorArgs {
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    /// Ticks between scoring points.
    #[arg(long, default_value_t = 60)]
    step: usize,
}

#[derive(Debug, Args, Serialize)]
struct ReplayArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Telemetry CSV of a well to replay (repeatable).
    #[arg(long = "well", required = true)]
    wells: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    layout: LayoutArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ScoreAlarmsArgs {
    #[arg(long)]
    alarms: PathBuf,
    /// JSON ground truth: [{well_id, duration_ticks, events: [{accident_type, anchor_tick}]}].
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long = "well", required = true)]
    wells: Vec<PathBuf>,
    #[arg(long)]
    events: PathBuf,
    /// Strictly ascending thresholds; defaults to 0.30, 0.35, ..., 0.95.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 60)]
    step: usize,
    #[command(flatten)]
    #[serde(flatten)]
    layout: LayoutArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ClusterMode {
    GroundTruth,
    UnsupervisedL1,
    ModelTrain,
    ModelCv,
}

#[derive(Debug, Args, Serialize)]
struct ClusterArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    mode: ClusterMode,
    /// Trained model; required for model-train.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of clusters; defaults to the number of populated ground-truth groups.
    #[arg(long)]
    k: Option<usize>,
    /// Well folds for model-cv.
    #[arg(long, default_value_t = 4)]
    folds: usize,
    /// Seed of the model-cv fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    gbdt: GbdtArgs,
    #[command(flatten)]
    #[serde(flatten)]
    layout: LayoutArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct RobustArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Random accident-free windows in the baseline set.
    #[arg(long, default_value_t = 200)]
    n_random: usize,
    /// Shifts in ticks.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [20i64, 40])]
    shifts: Vec<i64>,
    /// Standard deviations of the multiplicative noise curves.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.03, 0.1])]
    noise: Vec<f64>,
    /// Half-widths of moving-average smoothing in ticks.
    #[arg(long, value_delimiter = ',')]
    smooth: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    layout: LayoutArgs,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
