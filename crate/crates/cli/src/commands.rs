//! The eight pipeline subcommands. Every command reads its inputs, writes
//! its artifacts under the output directory, and prints a short summary
//! with the seeds that governed it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use impute_core::dataset::{
    inject_mar, inject_mcar, load_idx_images, load_idx_labels, load_masked,
    make_balanced_minibatches, normalize, save_masked, Batch, Dataset, LabelSet, Mechanism,
};
use impute_core::deepnet::{build_mlp_ae, fine_tune, train_conjugate_gradient, unroll};
use impute_core::evaluate::{
    aggregate, compare, comparison_csv, load_report, mean_imputation_baseline, save_report,
    ImputationReport, Summary,
};
use impute_core::imputer::impute_dataset;
use impute_core::modelstore::{load as load_model, save as save_model, ModelFile, ModelPayload};
use impute_core::rbm::pretrain_stack;

use crate::error::CliError;
use crate::files;
use crate::settings::Settings;

fn require<'a>(value: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::usage(format!("missing `{key}` (set it or pass {flag})")))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn truncate(data: Dataset, labels: Option<LabelSet>, count: Option<usize>, what: &str)
    -> Result<(Dataset, Option<LabelSet>), CliError>
{
    let Some(count) = count else { return Ok((data, labels)) };
    if count > data.count() {
        return Err(CliError::new(
            "cli",
            format!("{what}: requested {count} samples but only {} are available", data.count()),
        ));
    }
    if let Some(l) = &labels {
        if count > l.len() {
            return Err(CliError::new(
                "cli",
                format!("{what}: requested {count} labels but only {} are available", l.len()),
            ));
        }
    }
    let samples = data.samples.slice_move(ndarray::s![..count, ..]);
    let labels = labels.map(|l| LabelSet { labels: l.labels[..count].to_vec() });
    Ok((Dataset { samples }, labels))
}

/// Load IDX files, normalize pixels to [0, 1], optionally truncate, and
/// write the pipeline's plain-text data files.
pub fn ingest(s: &Settings) -> Result<(), CliError> {
    let train_images = require(&s.train_images, "data.train_images", "--train-images")?;
    let train_labels = require(&s.train_labels, "data.train_labels", "--train-labels")?;
    let test_images = require(&s.test_images, "data.test_images", "--test-images")?;

    let train = normalize(&load_idx_images(train_images)?);
    let labels = load_idx_labels(train_labels)?;
    let (train, labels) = truncate(train, Some(labels), s.train_count, "training set")?;
    let test = normalize(&load_idx_images(test_images)?);
    let test_labels = match &s.test_labels {
        Some(path) => Some(load_idx_labels(path)?),
        None => None,
    };
    let (test, test_labels) = truncate(test, test_labels, s.test_count, "test set")?;

    files::write_dataset(&s.in_out_dir(Path::new("train.csv")), &train)?;
    files::write_labels(
        &s.in_out_dir(Path::new("train-labels.csv")),
        labels.as_ref().expect("train labels are required"),
    )?;
    files::write_dataset(&s.in_out_dir(Path::new("test.csv")), &test)?;
    if let Some(tl) = &test_labels {
        files::write_labels(&s.in_out_dir(Path::new("test-labels.csv")), tl)?;
    }
    println!(
        "ingest: {} training and {} test samples of width {} -> {}",
        train.count(),
        test.count(),
        train.width(),
        s.out_dir.display()
    );
    Ok(())
}

fn load_training_batches(s: &Settings) -> Result<Vec<Batch>, CliError> {
    let data_path = s
        .data_file
        .clone()
        .unwrap_or_else(|| PathBuf::from("train.csv"));
    let labels_path = s
        .labels_file
        .clone()
        .unwrap_or_else(|| PathBuf::from("train-labels.csv"));
    let data = files::read_dataset(&s.in_out_dir(&data_path))?;
    let labels = files::read_labels(&s.in_out_dir(&labels_path))?;
    Ok(make_balanced_minibatches(&data, &labels, s.batches, s.batch_seed)?)
}

fn cd_metadata(s: &Settings, layer: usize, visible: usize, hidden: usize) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("layer".into(), layer.to_string());
    meta.insert("visible".into(), visible.to_string());
    meta.insert("hidden".into(), hidden.to_string());
    meta.insert("cd.epochs".into(), s.cd.epochs.to_string());
    meta.insert("cd.learning_rate".into(), s.cd.learning_rate.to_string());
    meta.insert("cd.k".into(), s.cd.k.to_string());
    meta.insert("cd.weight_cost".into(), s.cd.weight_cost.to_string());
    meta.insert("cd.seed".into(), s.cd.seed.to_string());
    meta.insert("batches".into(), s.batches.to_string());
    meta.insert("batch_seed".into(), s.batch_seed.to_string());
    meta
}

/// Greedy layer-wise pretraining; one model file per trained layer pair.
pub fn pretrain(s: &Settings) -> Result<(), CliError> {
    let batches = load_training_batches(s)?;
    let started = Instant::now();
    let stack = pretrain_stack(&batches, &s.layers, &s.cd)?;
    for (i, rbm) in stack.iter().enumerate() {
        let meta = cd_metadata(s, i, rbm.visible_count(), rbm.hidden_count());
        let file = ModelFile::with_metadata(ModelPayload::RbmStack(vec![rbm.clone()]), meta);
        let path = s.in_out_dir(Path::new(&format!("rbm-{i}.model")));
        save_model(&file, &path)?;
        println!(
            "pretrain: layer {i} ({}x{}) -> {}",
            rbm.visible_count(),
            rbm.hidden_count(),
            path.display()
        );
    }
    println!(
        "pretrain: {} layers in {:.1}s (cd.seed={}, batch_seed={})",
        stack.len(),
        started.elapsed().as_secs_f64(),
        s.cd.seed,
        s.batch_seed
    );
    Ok(())
}

fn load_stack(s: &Settings) -> Result<Vec<impute_core::rbm::Rbm>, CliError> {
    let mut stack = Vec::new();
    for i in 0..s.layers.len().saturating_sub(1) {
        let path = s.in_out_dir(Path::new(&format!("rbm-{i}.model")));
        let mut rbms = load_model(&path)?.expect_rbm_stack()?;
        stack.append(&mut rbms);
    }
    Ok(stack)
}

fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{},{loss}\n", epoch + 1));
    }
    out
}

/// Unroll the pretrained stack into a deep autoencoder and fine-tune it.
pub fn finetune(s: &Settings) -> Result<(), CliError> {
    let stack = load_stack(s)?;
    let unrolled = unroll(&stack)?;
    let batches = load_training_batches(s)?;
    let started = Instant::now();
    let (net, trace) = fine_tune(&unrolled, &batches, &s.finetune)?;

    let mut meta = BTreeMap::new();
    meta.insert("finetune.epochs".into(), s.finetune.epochs.to_string());
    meta.insert(
        "finetune.optimizer".into(),
        match s.finetune.optimizer {
            impute_core::deepnet::Optimizer::SgdMomentum => "sgd-momentum".to_string(),
            impute_core::deepnet::Optimizer::ConjugateGradient => "conjugate-gradient".to_string(),
        },
    );
    meta.insert("finetune.seed".into(), s.finetune.seed.to_string());
    let model_path = s.in_out_dir(Path::new("deep.model"));
    save_model(&ModelFile::with_metadata(ModelPayload::Network(net), meta), &model_path)?;
    write(&s.in_out_dir(Path::new("finetune-trace.csv")), &trace_csv(&trace))?;
    println!(
        "finetune: {} epochs in {:.1}s, final training loss {:.6} -> {}",
        trace.len(),
        started.elapsed().as_secs_f64(),
        trace.last().copied().unwrap_or(f64::NAN),
        model_path.display()
    );
    Ok(())
}

/// Train the single-hidden-layer autoencoder baseline with conjugate
/// gradient descent.
pub fn train_mlp(s: &Settings) -> Result<(), CliError> {
    let data_path = s.data_file.clone().unwrap_or_else(|| PathBuf::from("train.csv"));
    let data = files::read_dataset(&s.in_out_dir(&data_path))?;
    let net = build_mlp_ae(data.width(), s.mlp_hidden, s.mlp_seed);
    let started = Instant::now();
    let (net, trace) = train_conjugate_gradient(&net, &data, s.mlp_epochs, s.mlp_seed)?;

    let mut meta = BTreeMap::new();
    meta.insert("mlp.hidden".into(), s.mlp_hidden.to_string());
    meta.insert("mlp.epochs".into(), s.mlp_epochs.to_string());
    meta.insert("mlp.seed".into(), s.mlp_seed.to_string());
    let model_path = s.in_out_dir(Path::new("mlp.model"));
    save_model(&ModelFile::with_metadata(ModelPayload::Network(net), meta), &model_path)?;
    write(&s.in_out_dir(Path::new("mlp-trace.csv")), &trace_csv(&trace))?;
    println!(
        "train-mlp: {} epochs in {:.1}s, final training loss {:.6} -> {}",
        trace.len(),
        started.elapsed().as_secs_f64(),
        trace.last().copied().unwrap_or(f64::NAN),
        model_path.display()
    );
    Ok(())
}

/// Hide entries of the test data under the configured missingness
/// mechanism; ground truth stays alongside the mask for later evaluation.
pub fn corrupt(s: &Settings) -> Result<(), CliError> {
    let data_path = s.data_file.clone().unwrap_or_else(|| PathBuf::from("test.csv"));
    let data = files::read_dataset(&s.in_out_dir(&data_path))?;
    let masked = match s.mechanism {
        Mechanism::Mcar => inject_mcar(&data, s.rate, s.corrupt_seed)?,
        Mechanism::Mar => inject_mar(&data, s.rate, s.corrupt_seed)?,
    };
    let dir = s.in_out_dir(&s.masked_dir.clone().unwrap_or_else(|| PathBuf::from("masked")));
    save_masked(&masked, &dir)?;
    let total = masked.data.count() * masked.data.width();
    println!(
        "corrupt: {} of {} values hidden ({:.2}%) via {} seed {} -> {}",
        masked.total_missing(),
        total,
        100.0 * masked.total_missing() as f64 / total as f64,
        s.mechanism,
        s.corrupt_seed,
        dir.display()
    );
    Ok(())
}

fn summary_line(report: &ImputationReport, summary: &Summary) -> String {
    let seconds = summary
        .mean_seconds
        .map_or_else(|| "-".to_string(), |v| format!("{v:.3}s"));
    format!(
        "{}: {} values, mean squared error {:.6}, mean epsilon {:.6}, mean time {}",
        report.method, summary.row_count, summary.mean_squared_error, summary.mean_epsilon, seconds
    )
}

/// Search for the missing entries of every sample with the firefly
/// optimizer, minimizing the loaded network's reconstruction error.
pub fn impute(s: &Settings) -> Result<(), CliError> {
    let model_path =
        s.in_out_dir(&s.model_file.clone().unwrap_or_else(|| PathBuf::from("deep.model")));
    let net = load_model(&model_path)?.expect_network()?;
    let masked_dir =
        s.in_out_dir(&s.masked_dir.clone().unwrap_or_else(|| PathBuf::from("masked")));
    let masked = load_masked(&masked_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(s.jobs)
        .build()
        .map_err(|e| CliError::new("cli", format!("cannot build worker pool: {e}")))?;
    let started = Instant::now();
    let mut report = pool.install(|| impute_dataset(&net, &masked, &s.firefly))?;
    if let Some(method) = &s.method {
        report.method = method.clone();
    }

    let report_dir = match (&s.report_out, s.firefly.tolerance) {
        (Some(dir), _) => dir.clone(),
        (None, None) => PathBuf::from(format!("report-{}", report.method)),
        (None, Some(t)) => PathBuf::from(format!("report-{}-tol{t}", report.method)),
    };
    let report_dir = s.in_out_dir(&report_dir);
    save_report(&report, &report_dir)?;

    // Full matrix with estimates substituted at the missing positions.
    let mut imputed = masked.data.samples.clone();
    for row in &report.rows {
        imputed[(row.sample_index, row.feature_index)] = row.estimate;
    }
    let imputed_path = report_dir.join("imputed.csv");
    files::write_matrix(&imputed_path, &imputed)?;

    println!("impute: model {} on {} samples", model_path.display(), masked.data.count());
    println!(
        "impute: firefly seed {} jobs {} in {:.1}s -> {}",
        s.firefly.seed,
        s.jobs,
        started.elapsed().as_secs_f64(),
        report_dir.display()
    );
    match aggregate(&report) {
        Ok(summary) => println!("impute: {}", summary_line(&report, &summary)),
        Err(impute_core::evaluate::EvaluateError::EmptyReport) => {
            println!("impute: no values were missing; wrote an empty report");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn report_dirs(s: &Settings) -> Vec<PathBuf> {
    s.report_dirs
        .clone()
        .unwrap_or_else(|| vec![PathBuf::from("report-deep-autoencoder")])
}

fn summary_csv(report: &ImputationReport, summary: &Summary) -> String {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v}"));
    let mut out = String::from(
        "method,tolerance,rows,mean_epsilon,mean_squared_error,mean_seconds,median_seconds,mean_evaluations,total_evaluations\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{}\n",
        report.method,
        report.tolerance_used.map_or_else(|| "none".to_string(), |t| format!("{t}")),
        summary.row_count,
        summary.mean_epsilon,
        summary.mean_squared_error,
        opt(summary.mean_seconds),
        opt(summary.median_seconds),
        opt(summary.mean_evaluations),
        summary.total_evaluations,
    ));
    out
}

/// Aggregate per-value reports into summary tables; optionally generate the
/// mean-imputation baseline report first.
pub fn evaluate(s: &Settings) -> Result<(), CliError> {
    let mut dirs = report_dirs(s);
    if s.baseline {
        let data_path = s.data_file.clone().unwrap_or_else(|| PathBuf::from("train.csv"));
        let train = files::read_dataset(&s.in_out_dir(&data_path))?;
        let masked_dir =
            s.in_out_dir(&s.masked_dir.clone().unwrap_or_else(|| PathBuf::from("masked")));
        let masked = load_masked(&masked_dir)?;
        let baseline = mean_imputation_baseline(&train, &masked)?;
        let dir = PathBuf::from(format!("report-{}", baseline.method));
        save_report(&baseline, &s.in_out_dir(&dir))?;
        dirs.push(dir);
    }
    for dir in dirs {
        let dir = s.in_out_dir(&dir);
        let report = load_report(&dir)?;
        let summary = aggregate(&report)?;
        write(&dir.join("summary.csv"), &summary_csv(&report, &summary))?;
        println!("evaluate: {}", summary_line(&report, &summary));
    }
    Ok(())
}

/// Emit SVG charts for each report and, given several, the side-by-side
/// comparison table.
pub fn report(s: &Settings) -> Result<(), CliError> {
    let dirs = report_dirs(s);
    let mut loaded = Vec::new();
    for dir in &dirs {
        loaded.push(load_report(&s.in_out_dir(dir))?);
    }
    for report in &loaded {
        let scatter_path =
            s.in_out_dir(&PathBuf::from(format!("scatter-{}.svg", report.method)));
        write(&scatter_path, &crate::plots::scatter_svg(report)?)?;
        println!("report: {}", scatter_path.display());
        if report.per_sample_times.is_empty() {
            println!("report: {} has no per-sample times; skipping time chart", report.method);
        } else {
            let times_path =
                s.in_out_dir(&PathBuf::from(format!("times-{}.svg", report.method)));
            write(&times_path, &crate::plots::times_svg(report)?)?;
            println!("report: {}", times_path.display());
        }
    }
    if loaded.len() > 1 {
        let refs: Vec<&ImputationReport> = loaded.iter().collect();
        let table = compare(&refs)?;
        let path = s.in_out_dir(Path::new("comparison.csv"));
        write(&path, &comparison_csv(&table))?;
        println!("report: {}", path.display());
    }
    Ok(())
}
