//! Scoring of imputation results: per-value error rows, report aggregates,
//! a mean-imputation baseline, side-by-side method comparisons, and CSV
//! emission.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::dataset::{Dataset, MaskedDataset};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report contains no rows")]
    EmptyReport,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reports cover different (sample, feature) sets: {left} vs {right}")]
    RowSetMismatch { left: String, right: String },
    #[error("malformed {file}: {reason}")]
    Malformed { file: String, reason: String },
}

/// One imputed value scored against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueRow {
    pub sample_index: usize,
    pub feature_index: usize,
    pub actual: f64,
    pub estimate: f64,
    /// `|actual - estimate|`.
    pub epsilon: f64,
    /// `(actual - estimate)^2`.
    pub squared_error: f64,
}

impl ValueRow {
    pub fn new(sample_index: usize, feature_index: usize, actual: f64, estimate: f64) -> Self {
        let (epsilon, squared_error) = value_metrics(actual, estimate);
        ValueRow { sample_index, feature_index, actual, estimate, epsilon, squared_error }
    }
}

/// Absolute distance and squared error of an estimate.
pub fn value_metrics(actual: f64, estimate: f64) -> (f64, f64) {
    let epsilon = (actual - estimate).abs();
    (epsilon, epsilon * epsilon)
}

/// Everything produced by imputing one masked dataset with one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationReport {
    pub method: String,
    pub tolerance_used: Option<f64>,
    pub rows: Vec<ValueRow>,
    /// Wall seconds spent per imputed sample.
    pub per_sample_times: Vec<(usize, f64)>,
    /// Objective evaluations spent per imputed sample.
    pub per_sample_evaluations: Vec<(usize, usize)>,
}

impl ImputationReport {
    fn key_set(&self) -> BTreeSet<(usize, usize)> {
        self.rows.iter().map(|r| (r.sample_index, r.feature_index)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub row_count: usize,
    pub mean_epsilon: f64,
    pub mean_squared_error: f64,
    pub mean_seconds: Option<f64>,
    pub median_seconds: Option<f64>,
    pub mean_evaluations: Option<f64>,
    pub total_evaluations: usize,
}

/// Means over rows plus timing and evaluation statistics.
pub fn aggregate(report: &ImputationReport) -> Result<Summary, EvaluateError> {
    if report.rows.is_empty() {
        return Err(EvaluateError::EmptyReport);
    }
    let n = report.rows.len() as f64;
    let mean_epsilon = report.rows.iter().map(|r| r.epsilon).sum::<f64>() / n;
    let mean_squared_error = report.rows.iter().map(|r| r.squared_error).sum::<f64>() / n;

    let times: Vec<f64> = report.per_sample_times.iter().map(|&(_, t)| t).collect();
    let (mean_seconds, median_seconds) = if times.is_empty() {
        (None, None)
    } else {
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let mut sorted = times.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        (Some(mean), Some(median))
    };

    let total_evaluations: usize = report.per_sample_evaluations.iter().map(|&(_, e)| e).sum();
    let mean_evaluations = if report.per_sample_evaluations.is_empty() {
        None
    } else {
        Some(total_evaluations as f64 / report.per_sample_evaluations.len() as f64)
    };

    Ok(Summary {
        row_count: report.rows.len(),
        mean_epsilon,
        mean_squared_error,
        mean_seconds,
        median_seconds,
        mean_evaluations,
        total_evaluations,
    })
}

/// Estimate every missing entry by the training-set mean of its feature.
/// The workhorse yardstick: any learned method should beat it.
pub fn mean_imputation_baseline(
    train: &Dataset,
    masked: &MaskedDataset,
) -> Result<ImputationReport, EvaluateError> {
    if train.width() != masked.data.width() {
        return Err(EvaluateError::DimensionMismatch {
            expected: masked.data.width(),
            found: train.width(),
        });
    }
    let feature_means: Vec<f64> = (0..train.width())
        .map(|j| train.samples.column(j).mean().unwrap_or(0.0))
        .collect();
    let mut rows = Vec::new();
    for i in 0..masked.data.count() {
        for j in masked.missing_indices(i) {
            rows.push(ValueRow::new(i, j, masked.data.samples[(i, j)], feature_means[j]));
        }
    }
    Ok(ImputationReport {
        method: "mean-baseline".to_string(),
        tolerance_used: None,
        rows,
        per_sample_times: Vec::new(),
        per_sample_evaluations: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub summary: Summary,
}

/// Side-by-side aggregates with the winning method(s) per metric; ties list
/// every method attaining the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub methods: Vec<MethodSummary>,
    pub best_epsilon: Vec<String>,
    pub best_squared_error: Vec<String>,
    pub best_time: Vec<String>,
}

/// Compare reports that cover the same masked entries.
pub fn compare(reports: &[&ImputationReport]) -> Result<ComparisonTable, EvaluateError> {
    if reports.is_empty() {
        return Err(EvaluateError::EmptyReport);
    }
    let reference = reports[0].key_set();
    for report in &reports[1..] {
        let keys = report.key_set();
        if keys != reference {
            return Err(EvaluateError::RowSetMismatch {
                left: format!("{} ({} rows)", reports[0].method, reference.len()),
                right: format!("{} ({} rows)", report.method, keys.len()),
            });
        }
    }
    let methods: Vec<MethodSummary> = reports
        .iter()
        .map(|r| {
            aggregate(r).map(|summary| MethodSummary { method: r.method.clone(), summary })
        })
        .collect::<Result<_, _>>()?;

    let winners = |metric: &dyn Fn(&MethodSummary) -> Option<f64>| -> Vec<String> {
        let best = methods.iter().filter_map(metric).fold(f64::INFINITY, f64::min);
        methods
            .iter()
            .filter(|m| metric(m).is_some_and(|v| v == best))
            .map(|m| m.method.clone())
            .collect()
    };
    let best_epsilon = winners(&|m: &MethodSummary| Some(m.summary.mean_epsilon));
    let best_squared_error = winners(&|m: &MethodSummary| Some(m.summary.mean_squared_error));
    let best_time = winners(&|m: &MethodSummary| m.summary.mean_seconds);

    Ok(ComparisonTable { methods, best_epsilon, best_squared_error, best_time })
}

/// `sample,feature,actual,estimate,epsilon,squared_error` rows.
pub fn values_csv(report: &ImputationReport) -> String {
    let mut out = String::from("sample,feature,actual,estimate,epsilon,squared_error\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.sample_index, r.feature_index, r.actual, r.estimate, r.epsilon, r.squared_error
        ));
    }
    out
}

/// `sample,seconds` rows.
pub fn times_csv(report: &ImputationReport) -> String {
    let mut out = String::from("sample,seconds\n");
    for (sample, seconds) in &report.per_sample_times {
        out.push_str(&format!("{sample},{seconds}\n"));
    }
    out
}

/// `sample,evaluations` rows.
pub fn evaluations_csv(report: &ImputationReport) -> String {
    let mut out = String::from("sample,evaluations\n");
    for (sample, evals) in &report.per_sample_evaluations {
        out.push_str(&format!("{sample},{evals}\n"));
    }
    out
}

/// One row per method: aggregates plus winner flags per metric.
pub fn comparison_csv(table: &ComparisonTable) -> String {
    let mut out = String::from(
        "method,rows,mean_epsilon,mean_squared_error,mean_seconds,wins_epsilon,wins_squared_error,wins_time\n",
    );
    for m in &table.methods {
        let seconds =
            m.summary.mean_seconds.map_or(String::from(""), |s| format!("{s}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.method,
            m.summary.row_count,
            m.summary.mean_epsilon,
            m.summary.mean_squared_error,
            seconds,
            table.best_epsilon.contains(&m.method) as u8,
            table.best_squared_error.contains(&m.method) as u8,
            table.best_time.contains(&m.method) as u8,
        ));
    }
    out
}

/// Persist a report as `values.csv`, `times.csv`, `evaluations.csv` and
/// `meta.txt` inside `dir`.
pub fn save_report(report: &ImputationReport, dir: &Path) -> Result<(), EvaluateError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("values.csv"), values_csv(report))?;
    fs::write(dir.join("times.csv"), times_csv(report))?;
    fs::write(dir.join("evaluations.csv"), evaluations_csv(report))?;
    let tolerance = report.tolerance_used.map_or(String::from("none"), |t| format!("{t}"));
    fs::write(
        dir.join("meta.txt"),
        format!("method={}\ntolerance={}\n", report.method, tolerance),
    )?;
    Ok(())
}

pub fn load_report(dir: &Path) -> Result<ImputationReport, EvaluateError> {
    let malformed = |file: &Path, reason: String| EvaluateError::Malformed {
        file: file.display().to_string(),
        reason,
    };

    let meta_path = dir.join("meta.txt");
    let meta = fs::read_to_string(&meta_path)?;
    let mut method = None;
    let mut tolerance = None;
    for line in meta.lines() {
        match line.split_once('=') {
            Some(("method", v)) => method = Some(v.trim().to_string()),
            Some(("tolerance", v)) => {
                let v = v.trim();
                tolerance = if v == "none" {
                    None
                } else {
                    Some(v.parse::<f64>().map_err(|e| {
                        malformed(&meta_path, format!("bad tolerance `{v}`: {e}"))
                    })?)
                };
            }
            _ => {}
        }
    }
    let method =
        method.ok_or_else(|| malformed(&meta_path, "missing `method`".to_string()))?;

    let values_path = dir.join("values.csv");
    let text = fs::read_to_string(&values_path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(malformed(&values_path, format!("line {lineno}: expected 6 fields")));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| malformed(&values_path, format!("line {lineno}: `{s}`: {e}")))
        };
        let parse_u = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| malformed(&values_path, format!("line {lineno}: `{s}`: {e}")))
        };
        let row = ValueRow {
            sample_index: parse_u(fields[0])?,
            feature_index: parse_u(fields[1])?,
            actual: parse_f(fields[2])?,
            estimate: parse_f(fields[3])?,
            epsilon: parse_f(fields[4])?,
            squared_error: parse_f(fields[5])?,
        };
        if (row.epsilon - (row.actual - row.estimate).abs()).abs() > 1e-9 {
            return Err(malformed(
                &values_path,
                format!("line {lineno}: epsilon does not match actual/estimate"),
            ));
        }
        rows.push(row);
    }

    let parse_pairs = |name: &str| -> Result<Vec<(usize, f64)>, EvaluateError> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path)?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| malformed(&path, format!("line {lineno}: expected 2 fields")))?;
            let sample = a
                .parse::<usize>()
                .map_err(|e| malformed(&path, format!("line {lineno}: `{a}`: {e}")))?;
            let value = b
                .parse::<f64>()
                .map_err(|e| malformed(&path, format!("line {lineno}: `{b}`: {e}")))?;
            pairs.push((sample, value));
        }
        Ok(pairs)
    };
    let per_sample_times = parse_pairs("times.csv")?;
    let per_sample_evaluations = parse_pairs("evaluations.csv")?
        .into_iter()
        .map(|(s, v)| (s, v as usize))
        .collect();

    Ok(ImputationReport {
        method,
        tolerance_used: tolerance,
        rows,
        per_sample_times,
        per_sample_evaluations,
    })
}
