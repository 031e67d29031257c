//! Missing-value estimation: wraps a trained autoencoder into a
//! reconstruction-error objective over the missing coordinates of one sample
//! and searches it with the firefly optimizer, sample by sample.

use std::time::{Duration, Instant};

use ndarray::Array1;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::MaskedDataset;
use crate::deepnet::{Network, NetworkKind};
use crate::evaluate::{ImputationReport, ValueRow};
use crate::firefly::{optimize, Bounds, FireflyConfig, FireflyError, StopReason};

#[derive(Debug, Error)]
pub enum ImputerError {
    #[error("candidate length {found} does not match {expected} missing indices")]
    LengthMismatch { expected: usize, found: usize },
    #[error("network expects width {expected}, task has width {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Firefly(#[from] FireflyError),
}

/// One sample to impute: the observed values in feature order and the sorted
/// missing positions. Ground truth is deliberately absent so the search can
/// never peek at it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationTask {
    pub sample_index: usize,
    pub observed: Vec<f64>,
    pub missing_indices: Vec<usize>,
}

impl ImputationTask {
    pub fn new(
        sample_index: usize,
        observed: Vec<f64>,
        missing_indices: Vec<usize>,
    ) -> Result<Self, ImputerError> {
        if missing_indices.is_empty() {
            return Err(ImputerError::InvalidTask("no missing indices".into()));
        }
        let width = observed.len() + missing_indices.len();
        if !missing_indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(ImputerError::InvalidTask("missing indices must strictly increase".into()));
        }
        if missing_indices.last().copied().unwrap_or(0) >= width {
            return Err(ImputerError::InvalidTask(format!(
                "missing index {} outside feature range 0..{width}",
                missing_indices.last().unwrap()
            )));
        }
        Ok(ImputationTask { sample_index, observed, missing_indices })
    }

    /// Extract the task for one sample of a masked dataset, reading only
    /// values at observed positions; None when nothing is missing.
    pub fn from_masked(masked: &MaskedDataset, sample: usize) -> Option<Self> {
        let missing = masked.missing_indices(sample);
        if missing.is_empty() {
            return None;
        }
        Some(ImputationTask {
            sample_index: sample,
            observed: masked.observed_values(sample),
            missing_indices: missing,
        })
    }

    pub fn width(&self) -> usize {
        self.observed.len() + self.missing_indices.len()
    }
}

/// Interleave observed values and a candidate for the missing positions into
/// a full feature vector.
pub fn merge_candidate(
    observed: &[f64],
    missing_indices: &[usize],
    candidate: &Array1<f64>,
) -> Result<Array1<f64>, ImputerError> {
    if candidate.len() != missing_indices.len() {
        return Err(ImputerError::LengthMismatch {
            expected: missing_indices.len(),
            found: candidate.len(),
        });
    }
    let width = observed.len() + missing_indices.len();
    let mut full = Array1::zeros(width);
    let mut next_missing = 0;
    let mut next_observed = 0;
    for j in 0..width {
        if next_missing < missing_indices.len() && missing_indices[next_missing] == j {
            full[j] = candidate[next_missing];
            next_missing += 1;
        } else {
            full[j] = observed[next_observed];
            next_observed += 1;
        }
    }
    Ok(full)
}

/// Build the search objective: cost of a candidate is the network's mean
/// squared reconstruction error over ALL features of the merged vector.
/// Observed coordinates anchor the cost to reconstruction mismatch; missing
/// coordinates contribute self-consistency under the network.
pub fn reconstruction_objective<'a>(
    net: &'a Network,
    observed: &'a [f64],
    missing_indices: &'a [usize],
) -> Result<impl Fn(&Array1<f64>) -> f64 + 'a, ImputerError> {
    let width = observed.len() + missing_indices.len();
    if net.input_width() != width {
        return Err(ImputerError::DimensionMismatch {
            expected: net.input_width(),
            found: width,
        });
    }
    Ok(move |candidate: &Array1<f64>| {
        let full = merge_candidate(observed, missing_indices, candidate)
            .expect("candidate dimension is fixed by the optimizer");
        let z = net.reconstruct(full.view());
        (&z - &full).mapv(|d| d * d).mean().unwrap_or(0.0)
    })
}

/// Result of imputing one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationOutcome {
    pub sample_index: usize,
    pub missing_indices: Vec<usize>,
    /// One estimate per missing index, each in `[0, 1]`.
    pub estimates: Vec<f64>,
    pub final_objective: f64,
    pub evaluations: usize,
    pub elapsed: Duration,
    pub stop_reason: StopReason,
}

/// Search the missing coordinates of one sample over the unit box. The box
/// is forced to `[0,1]` regardless of `fa_config.bounds` because estimates
/// must remain valid normalized intensities.
pub fn impute_sample(
    net: &Network,
    task: &ImputationTask,
    fa_config: &FireflyConfig,
) -> Result<ImputationOutcome, ImputerError> {
    if net.input_width() != task.width() {
        return Err(ImputerError::DimensionMismatch {
            expected: net.input_width(),
            found: task.width(),
        });
    }
    let objective = reconstruction_objective(net, &task.observed, &task.missing_indices)?;
    let config = FireflyConfig {
        bounds: Bounds::Uniform { lower: 0.0, upper: 1.0 },
        ..fa_config.clone()
    };
    let start = Instant::now();
    let result = optimize(&objective, task.missing_indices.len(), &config)?;
    let elapsed = start.elapsed();
    Ok(ImputationOutcome {
        sample_index: task.sample_index,
        missing_indices: task.missing_indices.clone(),
        estimates: result.best_position.to_vec(),
        final_objective: result.best_cost,
        evaluations: result.evaluations,
        elapsed,
        stop_reason: result.stop_reason,
    })
}

/// Impute every sample that has missing entries; samples without any are
/// skipped. Sample `i` searches under seed `fa_config.seed + i`, so outcomes
/// do not depend on how samples are scheduled; samples run in parallel on
/// the ambient thread pool and the report keeps dataset order.
pub fn impute_dataset(
    net: &Network,
    masked: &MaskedDataset,
    fa_config: &FireflyConfig,
) -> Result<ImputationReport, ImputerError> {
    if net.input_width() != masked.data.width() {
        return Err(ImputerError::DimensionMismatch {
            expected: net.input_width(),
            found: masked.data.width(),
        });
    }
    let tasks: Vec<ImputationTask> = (0..masked.data.count())
        .filter_map(|i| ImputationTask::from_masked(masked, i))
        .collect();

    let outcomes: Vec<ImputationOutcome> = tasks
        .par_iter()
        .map(|task| {
            let config = FireflyConfig {
                seed: fa_config.seed.wrapping_add(task.sample_index as u64),
                ..fa_config.clone()
            };
            impute_sample(net, task, &config)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut per_sample_times = Vec::with_capacity(outcomes.len());
    let mut per_sample_evaluations = Vec::with_capacity(outcomes.len());
    for outcome in &outcomes {
        for (&j, &estimate) in outcome.missing_indices.iter().zip(&outcome.estimates) {
            let actual = masked.data.samples[(outcome.sample_index, j)];
            rows.push(ValueRow::new(outcome.sample_index, j, actual, estimate));
        }
        per_sample_times.push((outcome.sample_index, outcome.elapsed.as_secs_f64()));
        per_sample_evaluations.push((outcome.sample_index, outcome.evaluations));
    }
    let method = match net.kind {
        NetworkKind::DeepAe => "deep-autoencoder",
        NetworkKind::MlpAe => "mlp-autoencoder",
    };
    Ok(ImputationReport {
        method: method.to_string(),
        tolerance_used: fa_config.tolerance,
        rows,
        per_sample_times,
        per_sample_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{inject_mcar, Dataset};
    use crate::deepnet::{Activation, Layer, NetworkKind};
    use crate::firefly::Bounds;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_net(width: usize) -> Network {
        Network {
            layers: vec![Layer {
                weights: Array2::zeros((width, width)),
                biases: Array1::zeros(width),
                activation: Activation::Sigmoid,
            }],
            kind: NetworkKind::MlpAe,
        }
    }

    fn random_net(widths: &[usize], seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|p| Layer {
                weights: Array2::from_shape_fn((p[1], p[0]), |_| rng.gen_range(-1.0..1.0)),
                biases: Array1::from_shape_fn(p[1], |_| rng.gen_range(-0.5..0.5)),
                activation: Activation::Sigmoid,
            })
            .collect();
        Network { layers, kind: NetworkKind::DeepAe }
    }

    fn small_fa(seed: u64) -> FireflyConfig {
        FireflyConfig {
            population_size: Some(6),
            iterations: 30,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn merge_interleaves_positionally() {
        let merged = merge_candidate(&[0.1, 0.3], &[1, 3], &array![0.5, 0.9]).unwrap();
        assert_eq!(merged, array![0.1, 0.5, 0.3, 0.9]);
    }

    #[test]
    fn merge_full_replacement_when_everything_missing() {
        let merged = merge_candidate(&[], &[0, 1, 2], &array![0.3, 0.6, 0.9]).unwrap();
        assert_eq!(merged, array![0.3, 0.6, 0.9]);
    }

    #[test]
    fn merge_with_truth_recovers_sample() {
        let truth = array![0.2, 0.4, 0.6, 0.8];
        let merged = merge_candidate(&[0.2, 0.6], &[1, 3], &array![0.4, 0.8]).unwrap();
        assert_eq!(merged, truth);
    }

    #[test]
    fn merge_rejects_wrong_candidate_length() {
        assert!(matches!(
            merge_candidate(&[0.1], &[0, 2], &array![0.5]),
            Err(ImputerError::LengthMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn task_invariants_are_enforced() {
        assert!(ImputationTask::new(0, vec![0.5], vec![]).is_err());
        assert!(ImputationTask::new(0, vec![0.5], vec![1, 1]).is_err());
        assert!(ImputationTask::new(0, vec![0.5], vec![2]).is_err());
        assert!(ImputationTask::new(0, vec![0.5], vec![1]).is_ok());
    }

    #[test]
    fn objective_is_zero_at_a_network_fixed_point() {
        // A zero-parameter sigmoid layer maps everything to 0.5, so the
        // all-0.5 vector reconstructs itself exactly.
        let net = zero_net(3);
        let objective = reconstruction_objective(&net, &[0.5, 0.5], &[1]).unwrap();
        assert_eq!(objective(&array![0.5]), 0.0);
        assert!(objective(&array![0.9]) > 0.0);
    }

    #[test]
    fn objective_equals_single_row_mse() {
        let net = random_net(&[4, 3, 4], 1);
        let observed = [0.2, 0.7];
        let missing = [1, 2];
        let objective = reconstruction_objective(&net, &observed, &missing).unwrap();
        let candidate = array![0.4, 0.9];
        let full = merge_candidate(&observed, &missing, &candidate).unwrap();
        let batch = crate::dataset::Batch {
            samples: full.view().insert_axis(ndarray::Axis(0)).to_owned(),
        };
        let via_loss = crate::deepnet::mse_loss(&net, &batch);
        assert!((objective(&candidate) - via_loss).abs() < 1e-15);
    }

    #[test]
    fn objective_rejects_width_mismatch() {
        let net = zero_net(5);
        assert!(matches!(
            reconstruction_objective(&net, &[0.5], &[1]),
            Err(ImputerError::DimensionMismatch { expected: 5, found: 2 })
        ));
    }

    #[test]
    fn impute_sample_is_deterministic() {
        let net = random_net(&[4, 2, 4], 2);
        let task = ImputationTask::new(0, vec![0.3, 0.8], vec![0, 2]).unwrap();
        let a = impute_sample(&net, &task, &small_fa(5)).unwrap();
        let b = impute_sample(&net, &task, &small_fa(5)).unwrap();
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.evaluations, b.evaluations);
        assert_eq!(a.final_objective, b.final_objective);
    }

    #[test]
    fn final_objective_matches_estimates() {
        let net = random_net(&[5, 3, 5], 3);
        let task = ImputationTask::new(2, vec![0.1, 0.5, 0.9], vec![1, 3]).unwrap();
        let outcome = impute_sample(&net, &task, &small_fa(9)).unwrap();
        let objective =
            reconstruction_objective(&net, &task.observed, &task.missing_indices).unwrap();
        let at_estimates = objective(&Array1::from_vec(outcome.estimates.clone()));
        assert!((outcome.final_objective - at_estimates).abs() < 1e-12);
    }

    #[test]
    fn estimates_stay_in_unit_box_despite_wider_config() {
        let net = random_net(&[4, 2, 4], 4);
        let task = ImputationTask::new(0, vec![0.2, 0.4], vec![0, 3]).unwrap();
        let config = FireflyConfig {
            bounds: Bounds::Uniform { lower: -10.0, upper: 10.0 },
            ..small_fa(1)
        };
        let outcome = impute_sample(&net, &task, &config).unwrap();
        assert!(outcome.estimates.iter().all(|&e| (0.0..=1.0).contains(&e)));
    }

    #[test]
    fn tolerance_costs_no_extra_evaluations() {
        let net = random_net(&[4, 2, 4], 6);
        let task = ImputationTask::new(0, vec![0.3, 0.6], vec![1, 2]).unwrap();
        let base = small_fa(77);
        let without = impute_sample(&net, &task, &base).unwrap();
        let with = impute_sample(
            &net,
            &task,
            &FireflyConfig { tolerance: Some(0.05), ..base },
        )
        .unwrap();
        assert!(with.evaluations <= without.evaluations);
    }

    #[test]
    fn dataset_with_nothing_missing_gives_empty_report() {
        let net = zero_net(4);
        let data = Dataset { samples: Array2::from_elem((3, 4), 0.5) };
        let masked = inject_mcar(&data, 0.0, 0).unwrap();
        let report = impute_dataset(&net, &masked, &small_fa(0)).unwrap();
        assert!(report.rows.is_empty());
        assert!(report.per_sample_times.is_empty());
    }

    #[test]
    fn per_sample_seeds_offset_by_index() {
        let net = random_net(&[4, 2, 4], 8);
        let data = Dataset {
            samples: array![[0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.7, 0.8]],
        };
        let mut masked = inject_mcar(&data, 0.0, 0).unwrap();
        masked.mask[(0, 1)] = true;
        masked.mask[(1, 2)] = true;
        let base = small_fa(100);
        let report = impute_dataset(&net, &masked, &base).unwrap();

        for sample in 0..2 {
            let task = ImputationTask::from_masked(&masked, sample).unwrap();
            let config = FireflyConfig { seed: 100 + sample as u64, ..base.clone() };
            let outcome = impute_sample(&net, &task, &config).unwrap();
            let row = report.rows.iter().find(|r| r.sample_index == sample).unwrap();
            assert_eq!(row.estimate, outcome.estimates[0]);
        }
    }

    #[test]
    fn skipped_samples_leave_no_rows() {
        let net = random_net(&[3, 2, 3], 9);
        let data = Dataset {
            samples: array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]],
        };
        let mut masked = inject_mcar(&data, 0.0, 0).unwrap();
        masked.mask[(0, 0)] = true;
        masked.mask[(2, 2)] = true;
        let report = impute_dataset(&net, &masked, &small_fa(3)).unwrap();
        let samples: Vec<usize> = report.rows.iter().map(|r| r.sample_index).collect();
        assert_eq!(samples, vec![0, 2]);
        assert_eq!(report.per_sample_times.len(), 2);
        assert_eq!(report.rows[0].actual, 0.1);
        assert_eq!(report.rows[1].actual, 0.9);
    }

    #[test]
    fn search_never_reads_hidden_truth() {
        // Two datasets identical at observed positions but with different
        // ground truth under the mask must impute identically.
        let net = random_net(&[4, 2, 4], 10);
        let data_a = Dataset { samples: array![[0.1, 0.2, 0.3, 0.4]] };
        let data_b = Dataset { samples: array![[0.1, 0.99, 0.3, 0.4]] };
        let mut masked_a = inject_mcar(&data_a, 0.0, 0).unwrap();
        let mut masked_b = inject_mcar(&data_b, 0.0, 0).unwrap();
        masked_a.mask[(0, 1)] = true;
        masked_b.mask[(0, 1)] = true;
        let report_a = impute_dataset(&net, &masked_a, &small_fa(4)).unwrap();
        let report_b = impute_dataset(&net, &masked_b, &small_fa(4)).unwrap();
        assert_eq!(report_a.rows[0].estimate, report_b.rows[0].estimate);
        assert_ne!(report_a.rows[0].actual, report_b.rows[0].actual);
    }

    #[test]
    fn method_label_follows_network_kind() {
        let mut net = random_net(&[3, 2, 3], 11);
        let data = Dataset { samples: array![[0.1, 0.2, 0.3]] };
        let mut masked = inject_mcar(&data, 0.0, 0).unwrap();
        masked.mask[(0, 0)] = true;
        let report = impute_dataset(&net, &masked, &small_fa(0)).unwrap();
        assert_eq!(report.method, "deep-autoencoder");
        net.kind = NetworkKind::MlpAe;
        let report = impute_dataset(&net, &masked, &small_fa(0)).unwrap();
        assert_eq!(report.method, "mlp-autoencoder");
    }
}
