//! Firefly-algorithm minimizer over a box domain: fireflies move toward
//! brighter (lower-cost) ones with attractiveness decaying in distance, plus
//! a Gaussian randomization step, with tolerance- and budget-based stopping.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FireflyError {
    #[error("objective returned a non-finite value at {position:?}")]
    ObjectiveNonFinite { position: Vec<f64> },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Box bounds, either one interval for every coordinate or one per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Bounds {
    Uniform { lower: f64, upper: f64 },
    PerDimension { lower: Vec<f64>, upper: Vec<f64> },
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::Uniform { lower: 0.0, upper: 1.0 }
    }
}

impl Bounds {
    pub fn lower(&self, dim: usize) -> f64 {
        match self {
            Bounds::Uniform { lower, .. } => *lower,
            Bounds::PerDimension { lower, .. } => lower[dim],
        }
    }

    pub fn upper(&self, dim: usize) -> f64 {
        match self {
            Bounds::Uniform { upper, .. } => *upper,
            Bounds::PerDimension { upper, .. } => upper[dim],
        }
    }

    fn validate(&self, dimension: usize) -> Result<(), FireflyError> {
        match self {
            Bounds::Uniform { lower, upper } => {
                if !(lower < upper) {
                    return Err(FireflyError::InvalidConfig(format!(
                        "lower bound {lower} not below upper bound {upper}"
                    )));
                }
            }
            Bounds::PerDimension { lower, upper } => {
                if lower.len() != dimension {
                    return Err(FireflyError::DimensionMismatch {
                        expected: dimension,
                        found: lower.len(),
                    });
                }
                if upper.len() != dimension {
                    return Err(FireflyError::DimensionMismatch {
                        expected: dimension,
                        found: upper.len(),
                    });
                }
                for (l, u) in lower.iter().zip(upper) {
                    if !(l < u) {
                        return Err(FireflyError::InvalidConfig(format!(
                            "lower bound {l} not below upper bound {u}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireflyConfig {
    /// None applies the dimension rule: one firefly per coordinate being
    /// searched, floored at 5 (a tiny swarm cannot explore).
    pub population_size: Option<usize>,
    pub iterations: usize,
    /// Randomization step scale; cooled geometrically so late steps refine
    /// rather than scatter (a constant step cannot settle into an optimum).
    pub alpha: f64,
    /// Attractiveness at zero distance.
    pub beta0: f64,
    /// Light absorption; higher values localize attraction.
    pub gamma: f64,
    pub bounds: Bounds,
    /// Stop as soon as the best cost is at or below this value.
    pub tolerance: Option<f64>,
    /// Hard cap on objective evaluations; None leaves the run bounded by
    /// iterations only.
    pub max_evaluations: Option<usize>,
    pub seed: u64,
}

impl Default for FireflyConfig {
    fn default() -> Self {
        FireflyConfig {
            population_size: None,
            iterations: 1000,
            alpha: 0.25,
            beta0: 0.2,
            gamma: 1.0,
            bounds: Bounds::default(),
            tolerance: None,
            max_evaluations: None,
            seed: 0,
        }
    }
}

impl FireflyConfig {
    fn validate(&self, dimension: usize) -> Result<usize, FireflyError> {
        if dimension == 0 {
            return Err(FireflyError::InvalidConfig("dimension must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(FireflyError::InvalidConfig("iterations must be positive".into()));
        }
        if self.alpha < 0.0 || self.beta0 < 0.0 || self.gamma < 0.0 {
            return Err(FireflyError::InvalidConfig(
                "alpha, beta0 and gamma must be non-negative".into(),
            ));
        }
        if self.max_evaluations == Some(0) {
            return Err(FireflyError::InvalidConfig("evaluation budget must be positive".into()));
        }
        self.bounds.validate(dimension)?;
        let population = self.population_size.unwrap_or_else(|| dimension.max(5));
        if population < 2 {
            return Err(FireflyError::InvalidConfig(format!(
                "population of {population} cannot interact"
            )));
        }
        Ok(population)
    }
}

/// One candidate solution and its objective value (brightness is the
/// negated cost).
#[derive(Debug, Clone, PartialEq)]
pub struct Firefly {
    pub position: Array1<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIterations,
    MaxEvaluations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_position: Array1<f64>,
    pub best_cost: f64,
    pub evaluations: usize,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    /// Best cost after initialization and after each completed iteration.
    pub trace: Vec<f64>,
}

/// Attraction coefficient `beta0 * exp(-gamma * r^2)`.
pub fn attractiveness(beta0: f64, gamma: f64, r: f64) -> f64 {
    beta0 * (-gamma * r * r).exp()
}

/// Euclidean distance between two positions.
pub fn pairwise_distance(xi: &Array1<f64>, xj: &Array1<f64>) -> f64 {
    assert_eq!(xi.len(), xj.len(), "position length mismatch");
    xi.iter().zip(xj.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// One move of firefly `i` toward a brighter firefly `j`:
/// `x_i + beta0 e^{-gamma r^2} (x_j - x_i) + alpha * eps * width`,
/// with `eps` standard Gaussian per component and the result clamped to the
/// box. `alpha` is passed explicitly because it cools over the run.
pub fn move_firefly(
    xi: &Firefly,
    xj: &Firefly,
    alpha: f64,
    config: &FireflyConfig,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    let beta = attractiveness(config.beta0, config.gamma, pairwise_distance(&xi.position, &xj.position));
    Array1::from_shape_fn(xi.position.len(), |d| {
        let (lower, upper) = (config.bounds.lower(d), config.bounds.upper(d));
        let eps: f64 = rng.sample(StandardNormal);
        let moved = xi.position[d]
            + beta * (xj.position[d] - xi.position[d])
            + alpha * eps * (upper - lower);
        moved.clamp(lower, upper)
    })
}

struct Budget {
    evaluations: usize,
    max_evaluations: Option<usize>,
    tolerance: Option<f64>,
}

enum Verdict {
    Continue,
    Stop(StopReason),
}

impl Budget {
    /// Account for one evaluation and decide whether to halt. Tolerance wins
    /// over budget exhaustion when both trigger on the same evaluation.
    fn after_evaluation(&mut self, best_cost: f64) -> Verdict {
        self.evaluations += 1;
        if let Some(tol) = self.tolerance {
            if best_cost <= tol {
                return Verdict::Stop(StopReason::Tolerance);
            }
        }
        if let Some(cap) = self.max_evaluations {
            if self.evaluations >= cap {
                return Verdict::Stop(StopReason::MaxEvaluations);
            }
        }
        Verdict::Continue
    }
}

/// Minimize `objective` over the configured box.
///
/// The population initializes uniformly in the box. Each iteration sweeps
/// ordered pairs: whenever firefly `j` is brighter than firefly `i`, firefly
/// `i` moves and is re-evaluated immediately (so later pairs in the same
/// sweep see the move); the move is kept only if it does not worsen the
/// firefly. The best solution ever seen is tracked separately and never
/// perturbed. The randomization scale cools geometrically to a 1e-4/0.9
/// fraction of alpha across the run. Deterministic for a fixed seed.
pub fn optimize(
    objective: &dyn Fn(&Array1<f64>) -> f64,
    dimension: usize,
    config: &FireflyConfig,
) -> Result<OptimizationResult, FireflyError> {
    let population = config.validate(dimension)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut budget = Budget {
        evaluations: 0,
        max_evaluations: config.max_evaluations,
        tolerance: config.tolerance,
    };

    let check = |position: &Array1<f64>, cost: f64| -> Result<f64, FireflyError> {
        if cost.is_finite() {
            Ok(cost)
        } else {
            Err(FireflyError::ObjectiveNonFinite { position: position.to_vec() })
        }
    };

    let mut swarm: Vec<Firefly> = Vec::with_capacity(population);
    let mut best: Option<Firefly> = None;
    let mut stop = None;
    for _ in 0..population {
        let position = Array1::from_shape_fn(dimension, |d| {
            rng.gen_range(config.bounds.lower(d)..config.bounds.upper(d))
        });
        let cost = check(&position, objective(&position))?;
        let fly = Firefly { position, cost };
        if best.as_ref().map_or(true, |b| cost < b.cost) {
            best = Some(fly.clone());
        }
        swarm.push(fly);
        if let Verdict::Stop(reason) = budget.after_evaluation(best.as_ref().unwrap().cost) {
            stop = Some(reason);
            break;
        }
    }
    let mut best = best.expect("population is nonempty");
    let mut trace = vec![best.cost];

    // Geometric cooling of the randomization scale over the configured
    // iteration span, ending at alpha * 1e-4 / 0.9.
    let cooling = (1e-4_f64 / 0.9).powf(1.0 / config.iterations as f64);
    let mut alpha = config.alpha;

    let mut iterations_run = 0;
    'outer: while stop.is_none() {
        if iterations_run >= config.iterations {
            stop = Some(StopReason::MaxIterations);
            break;
        }
        alpha *= cooling;
        for i in 0..population {
            for j in 0..population {
                if j == i || swarm[j].cost >= swarm[i].cost {
                    continue;
                }
                let position = move_firefly(&swarm[i], &swarm[j], alpha, config, &mut rng);
                let cost = check(&position, objective(&position))?;
                if cost <= swarm[i].cost {
                    swarm[i] = Firefly { position, cost };
                    if cost < best.cost {
                        best = swarm[i].clone();
                    }
                }
                if let Verdict::Stop(reason) = budget.after_evaluation(best.cost) {
                    stop = Some(reason);
                    break 'outer;
                }
            }
        }
        iterations_run += 1;
        trace.push(best.cost);
    }

    Ok(OptimizationResult {
        best_position: best.position,
        best_cost: best.cost,
        evaluations: budget.evaluations,
        iterations_run,
        stop_reason: stop.unwrap_or(StopReason::MaxIterations),
        trace,
    })
}
