//! `impute` — pipeline driver: ingest → pretrain → finetune → train-mlp →
//! corrupt → impute → evaluate → report.
//!
//! Settings resolve in this order, later sources winning: built-in defaults,
//! the `--scale` preset, the `--config` file (its own `scale` key applies
//! before its other keys), the `IMPUTE_OUT_DIR` environment variable (output
//! directory only), and explicit flags. Every run writes a replayable
//! `run-manifest-<command>.txt` capturing the full effective configuration.

mod commands;
mod error;
mod files;
mod plots;
mod settings;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::settings::{Scale, Settings};

#[derive(Parser)]
#[command(
    name = "impute",
    version,
    about = "Train autoencoders and impute missing values with a firefly search"
)]
struct Cli {
    /// Flat key=value configuration file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for all artifacts (also: IMPUTE_OUT_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Size preset: full-size defaults or the small desk pipeline.
    #[arg(long, global = true, value_enum)]
    scale: Option<Scale>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load IDX image/label files, normalize to [0,1], write data files.
    Ingest(IngestArgs),
    /// Train the layer-wise model stack; one model file per layer pair.
    Pretrain(TrainDataArgs),
    /// Unroll the pretrained stack and fine-tune the deep autoencoder.
    Finetune(FinetuneArgs),
    /// Train the single-hidden-layer autoencoder baseline.
    TrainMlp(TrainMlpArgs),
    /// Hide a fraction of the test data under a missingness mechanism.
    Corrupt(CorruptArgs),
    /// Estimate the hidden values by firefly search over a trained model.
    Impute(ImputeArgs),
    /// Summarize per-value reports; optionally add the mean baseline.
    Evaluate(EvaluateArgs),
    /// Emit SVG charts and the side-by-side method comparison.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::TrainMlp(_) => "train-mlp",
            Command::Corrupt(_) => "corrupt",
            Command::Impute(_) => "impute",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// IDX file of training images.
    #[arg(long, value_name = "FILE")]
    train_images: Option<PathBuf>,
    /// IDX file of training labels.
    #[arg(long, value_name = "FILE")]
    train_labels: Option<PathBuf>,
    /// IDX file of test images.
    #[arg(long, value_name = "FILE")]
    test_images: Option<PathBuf>,
    /// IDX file of test labels.
    #[arg(long, value_name = "FILE")]
    test_labels: Option<PathBuf>,
    /// Keep only the first N training samples (or `all`).
    #[arg(long, value_name = "N")]
    train_count: Option<String>,
    /// Keep only the first N test samples (or `all`).
    #[arg(long, value_name = "N")]
    test_count: Option<String>,
}

#[derive(Args)]
struct TrainDataArgs {
    /// Training data file (default train.csv in the output directory).
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Training label file (default train-labels.csv).
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,
    /// Layer sizes, e.g. 784,200,30.
    #[arg(long, value_name = "SIZES")]
    layers: Option<String>,
    /// Number of class-balanced mini-batches.
    #[arg(long, value_name = "N")]
    batches: Option<usize>,
    /// Seed for the batch shuffle.
    #[arg(long, value_name = "SEED")]
    batch_seed: Option<u64>,
    /// Training epochs per layer.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Contrastive-divergence learning rate.
    #[arg(long, value_name = "RATE")]
    learning_rate: Option<f64>,
    /// Gibbs steps per gradient estimate.
    #[arg(long, value_name = "K")]
    k: Option<usize>,
    /// L2 penalty on weights.
    #[arg(long, value_name = "COST")]
    weight_cost: Option<f64>,
    /// Base seed; layer i trains under seed+i.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Training data file (default train.csv).
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Training label file (default train-labels.csv).
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,
    /// Layer sizes of the pretrained stack to load.
    #[arg(long, value_name = "SIZES")]
    layers: Option<String>,
    /// Number of class-balanced mini-batches.
    #[arg(long, value_name = "N")]
    batches: Option<usize>,
    /// Seed for the batch shuffle.
    #[arg(long, value_name = "SEED")]
    batch_seed: Option<u64>,
    /// Fine-tuning epochs.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// `sgd-momentum` or `conjugate-gradient`.
    #[arg(long, value_name = "NAME")]
    optimizer: Option<String>,
    /// Learning rate (gradient-descent optimizer only).
    #[arg(long, value_name = "RATE")]
    learning_rate: Option<f64>,
    /// Momentum (gradient-descent optimizer only).
    #[arg(long, value_name = "M")]
    momentum: Option<f64>,
    /// Seed for batch order.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainMlpArgs {
    /// Training data file (default train.csv).
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Hidden-layer width.
    #[arg(long, value_name = "N")]
    hidden: Option<usize>,
    /// Training epochs.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Seed for weight initialization.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct CorruptArgs {
    /// Data file to corrupt (default test.csv).
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Missingness mechanism: `mcar` or `mar`.
    #[arg(long, value_name = "NAME")]
    mechanism: Option<String>,
    /// Expected fraction of hidden values.
    #[arg(long, value_name = "RATE")]
    rate: Option<f64>,
    /// Seed for the selection.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Output directory for the masked data (default masked/).
    #[arg(long, value_name = "DIR")]
    masked_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ImputeArgs {
    /// Trained model file (default deep.model).
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Masked-data directory (default masked/).
    #[arg(long, value_name = "DIR")]
    masked_dir: Option<PathBuf>,
    /// Report output directory (default report-<method>).
    #[arg(long, value_name = "DIR")]
    report_dir: Option<PathBuf>,
    /// Label for the report (default: named after the model kind).
    #[arg(long, value_name = "NAME")]
    method: Option<String>,
    /// Stop a sample's search at this objective value (or `none`).
    #[arg(long, value_name = "TOL")]
    tolerance: Option<String>,
    /// Worker threads for imputing samples in parallel (0 = all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Swarm size (or `auto` for the dimension rule).
    #[arg(long, value_name = "N")]
    population: Option<String>,
    /// Search iterations per sample.
    #[arg(long, value_name = "N")]
    iterations: Option<usize>,
    /// Randomization step scale.
    #[arg(long, value_name = "A")]
    alpha: Option<f64>,
    /// Attractiveness at distance zero.
    #[arg(long, value_name = "B")]
    beta0: Option<f64>,
    /// Light absorption coefficient.
    #[arg(long, value_name = "G")]
    gamma: Option<f64>,
    /// Cap on objective evaluations per sample (or `none`).
    #[arg(long, value_name = "N")]
    max_evaluations: Option<String>,
    /// Base seed; sample i searches under seed+i.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Report directory to summarize (repeatable).
    #[arg(long = "report", value_name = "DIR")]
    reports: Vec<PathBuf>,
    /// Also compute the mean-imputation baseline report.
    #[arg(long)]
    baseline: bool,
    /// Training data file for the baseline means (default train.csv).
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Masked-data directory for the baseline (default masked/).
    #[arg(long, value_name = "DIR")]
    masked_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report directory to chart (repeatable).
    #[arg(long = "report", value_name = "DIR")]
    reports: Vec<PathBuf>,
}

fn usage(e: String) -> CliError {
    CliError::usage(e)
}

impl Command {
    /// Apply subcommand flags on top of the merged settings (flags win).
    fn apply(&self, s: &mut Settings) -> Result<(), CliError> {
        match self {
            Command::Ingest(a) => {
                if let Some(v) = &a.train_images {
                    s.train_images = Some(v.clone());
                }
                if let Some(v) = &a.train_labels {
                    s.train_labels = Some(v.clone());
                }
                if let Some(v) = &a.test_images {
                    s.test_images = Some(v.clone());
                }
                if let Some(v) = &a.test_labels {
                    s.test_labels = Some(v.clone());
                }
                if let Some(v) = &a.train_count {
                    s.apply_key("data.train_count", v).map_err(usage)?;
                }
                if let Some(v) = &a.test_count {
                    s.apply_key("data.test_count", v).map_err(usage)?;
                }
            }
            Command::Pretrain(a) => {
                if let Some(v) = &a.data {
                    s.data_file = Some(v.clone());
                }
                if let Some(v) = &a.labels {
                    s.labels_file = Some(v.clone());
                }
                if let Some(v) = &a.layers {
                    s.apply_key("layers", v).map_err(usage)?;
                }
                if let Some(v) = a.batches {
                    s.batches = v;
                }
                if let Some(v) = a.batch_seed {
                    s.batch_seed = v;
                }
                if let Some(v) = a.epochs {
                    s.cd.epochs = v;
                }
                if let Some(v) = a.learning_rate {
                    s.cd.learning_rate = v;
                }
                if let Some(v) = a.k {
                    s.cd.k = v;
                }
                if let Some(v) = a.weight_cost {
                    s.cd.weight_cost = v;
                }
                if let Some(v) = a.seed {
                    s.cd.seed = v;
                }
            }
            Command::Finetune(a) => {
                if let Some(v) = &a.data {
                    s.data_file = Some(v.clone());
                }
                if let Some(v) = &a.labels {
                    s.labels_file = Some(v.clone());
                }
                if let Some(v) = &a.layers {
                    s.apply_key("layers", v).map_err(usage)?;
                }
                if let Some(v) = a.batches {
                    s.batches = v;
                }
                if let Some(v) = a.batch_seed {
                    s.batch_seed = v;
                }
                if let Some(v) = a.epochs {
                    s.finetune.epochs = v;
                }
                if let Some(v) = &a.optimizer {
                    s.apply_key("finetune.optimizer", v).map_err(usage)?;
                }
                if let Some(v) = a.learning_rate {
                    s.finetune.learning_rate = v;
                }
                if let Some(v) = a.momentum {
                    s.finetune.momentum = v;
                }
                if let Some(v) = a.seed {
                    s.finetune.seed = v;
                }
            }
            Command::TrainMlp(a) => {
                if let Some(v) = &a.data {
                    s.data_file = Some(v.clone());
                }
                if let Some(v) = a.hidden {
                    s.mlp_hidden = v;
                }
                if let Some(v) = a.epochs {
                    s.mlp_epochs = v;
                }
                if let Some(v) = a.seed {
                    s.mlp_seed = v;
                }
            }
            Command::Corrupt(a) => {
                if let Some(v) = &a.data {
                    s.data_file = Some(v.clone());
                }
                if let Some(v) = &a.mechanism {
                    s.apply_key("corrupt.mechanism", v).map_err(usage)?;
                }
                if let Some(v) = a.rate {
                    s.rate = v;
                }
                if let Some(v) = a.seed {
                    s.corrupt_seed = v;
                }
                if let Some(v) = &a.masked_dir {
                    s.masked_dir = Some(v.clone());
                }
            }
            Command::Impute(a) => {
                if let Some(v) = &a.model {
                    s.model_file = Some(v.clone());
                }
                if let Some(v) = &a.masked_dir {
                    s.masked_dir = Some(v.clone());
                }
                if let Some(v) = &a.report_dir {
                    s.report_out = Some(v.clone());
                }
                if let Some(v) = &a.method {
                    s.method = Some(v.clone());
                }
                if let Some(v) = &a.tolerance {
                    s.apply_key("tolerance", v).map_err(usage)?;
                }
                if let Some(v) = a.jobs {
                    s.jobs = v;
                }
                if let Some(v) = &a.population {
                    s.apply_key("firefly.population", v).map_err(usage)?;
                }
                if let Some(v) = a.iterations {
                    s.firefly.iterations = v;
                }
                if let Some(v) = a.alpha {
                    s.firefly.alpha = v;
                }
                if let Some(v) = a.beta0 {
                    s.firefly.beta0 = v;
                }
                if let Some(v) = a.gamma {
                    s.firefly.gamma = v;
                }
                if let Some(v) = &a.max_evaluations {
                    s.apply_key("firefly.max_evaluations", v).map_err(usage)?;
                }
                if let Some(v) = a.seed {
                    s.firefly.seed = v;
                }
            }
            Command::Evaluate(a) => {
                if !a.reports.is_empty() {
                    s.report_dirs = Some(a.reports.clone());
                }
                if a.baseline {
                    s.baseline = true;
                }
                if let Some(v) = &a.data {
                    s.data_file = Some(v.clone());
                }
                if let Some(v) = &a.masked_dir {
                    s.masked_dir = Some(v.clone());
                }
            }
            Command::Report(a) => {
                if !a.reports.is_empty() {
                    s.report_dirs = Some(a.reports.clone());
                }
            }
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut s = Settings::default();
    if let Some(scale) = cli.scale {
        s.apply_scale(scale);
    }
    if let Some(config) = &cli.config {
        let text = fs::read_to_string(config).map_err(|e| {
            CliError::usage(format!("cannot read config file {}: {e}", config.display()))
        })?;
        s.apply_config_text(&text, config).map_err(CliError::usage)?;
    }
    if let Ok(dir) = std::env::var("IMPUTE_OUT_DIR") {
        if !dir.is_empty() {
            s.out_dir = PathBuf::from(dir);
        }
    }
    if let Some(dir) = &cli.out_dir {
        s.out_dir = dir.clone();
    }
    cli.command.apply(&mut s)?;

    fs::create_dir_all(&s.out_dir).map_err(|e| CliError::io(&s.out_dir, e))?;
    let name = cli.command.name();
    let manifest_path = s.out_dir.join(format!("run-manifest-{name}.txt"));
    fs::write(&manifest_path, s.manifest(name)).map_err(|e| CliError::io(&manifest_path, e))?;
    println!("{name}: manifest -> {}", manifest_path.display());

    match &cli.command {
        Command::Ingest(_) => commands::ingest(&s),
        Command::Pretrain(_) => commands::pretrain(&s),
        Command::Finetune(_) => commands::finetune(&s),
        Command::TrainMlp(_) => commands::train_mlp(&s),
        Command::Corrupt(_) => commands::corrupt(&s),
        Command::Impute(_) => commands::impute(&s),
        Command::Evaluate(_) => commands::evaluate(&s),
        Command::Report(_) => commands::report(&s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
