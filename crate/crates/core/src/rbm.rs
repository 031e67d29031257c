//! Restricted Boltzmann machine: energy model, factorized conditionals,
//! Gibbs sampling, contrastive-divergence training, and exact enumeration
//! oracles used to validate the sampled gradients.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::{Batch, Dataset};

#[derive(Debug, Error)]
pub enum RbmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{visible}+{hidden} units is too large to enumerate (limit 24)")]
    TooLargeToEnumerate { visible: usize, hidden: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Binary-binary RBM with energy `E(v,h) = -h'Wv - b'v - c'h`.
///
/// `w` is hidden x visible; `b` holds the visible biases, `c` the hidden
/// biases. Real-valued inputs in `[0,1]` are treated as Bernoulli
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub c: Array1<f64>,
}

/// Contrastive-divergence hyperparameters.
#[derive(Debug, Clone)]
pub struct CdConfig {
    pub epochs: usize,
    /// Applied to weights and both bias vectors alike.
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// Epoch index at which momentum jumps from initial to final.
    pub momentum_switch_epoch: usize,
    /// L2 weight decay on `w` only; biases are not decayed.
    pub weight_cost: f64,
    /// Gibbs steps per gradient estimate.
    pub k: usize,
    pub seed: u64,
}

impl Default for CdConfig {
    fn default() -> Self {
        CdConfig {
            epochs: 50,
            learning_rate: 0.1,
            momentum_initial: 0.5,
            momentum_final: 0.9,
            momentum_switch_epoch: 5,
            weight_cost: 0.0002,
            k: 1,
            seed: 0,
        }
    }
}

impl CdConfig {
    fn validate(&self) -> Result<(), RbmError> {
        if self.epochs == 0 {
            return Err(RbmError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(RbmError::InvalidConfig("learning rate must be non-negative".into()));
        }
        for m in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return Err(RbmError::InvalidConfig(format!("momentum {m} outside [0,1)")));
            }
        }
        if self.weight_cost < 0.0 {
            return Err(RbmError::InvalidConfig("weight cost must be non-negative".into()));
        }
        if self.k == 0 {
            return Err(RbmError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Log-likelihood ascent direction for one RBM.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub d_w: Array2<f64>,
    pub d_b: Array1<f64>,
    pub d_c: Array1<f64>,
}

impl RbmGradient {
    fn zeros(hidden: usize, visible: usize) -> Self {
        RbmGradient {
            d_w: Array2::zeros((hidden, visible)),
            d_b: Array1::zeros(visible),
            d_c: Array1::zeros(hidden),
        }
    }

    /// Flat copy of all blocks in `w`-rows, `b`, `c` order.
    pub fn concat(&self) -> Vec<f64> {
        self.d_w.iter().chain(self.d_b.iter()).chain(self.d_c.iter()).copied().collect()
    }
}

/// One CD chain: `vk` is the conditional mean after the final step,
/// `h0probs`/`hkprobs` the hidden conditionals at the first and last step.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    pub vk: Array1<f64>,
    pub h0probs: Array1<f64>,
    pub hkprobs: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sample_bernoulli(probs: &Array1<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    probs.mapv(|p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 })
}

impl Rbm {
    /// Fresh RBM with weights drawn from a Gaussian of standard deviation
    /// 0.01 and zero biases.
    pub fn new(visible: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let w = Array2::from_shape_fn((hidden, visible), |_| normal.sample(rng));
        Rbm { w, b: Array1::zeros(visible), c: Array1::zeros(hidden) }
    }

    pub fn visible_count(&self) -> usize {
        self.w.ncols()
    }

    pub fn hidden_count(&self) -> usize {
        self.w.nrows()
    }

    /// `E(v,h) = -h'Wv - b'v - c'h`.
    pub fn energy(&self, v: ArrayView1<'_, f64>, h: ArrayView1<'_, f64>) -> f64 {
        assert_eq!(v.len(), self.visible_count(), "visible length mismatch");
        assert_eq!(h.len(), self.hidden_count(), "hidden length mismatch");
        -h.dot(&self.w.dot(&v)) - self.b.dot(&v) - self.c.dot(&h)
    }

    /// `p(h_i = 1 | v) = sigmoid(c_i + sum_j w_ij v_j)`, independent per unit.
    pub fn prob_hidden_given_visible(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(v.len(), self.visible_count(), "visible length mismatch");
        (self.w.dot(&v) + &self.c).mapv(sigmoid)
    }

    /// `p(v_j = 1 | h) = sigmoid(b_j + sum_i w_ij h_i)`, independent per unit.
    pub fn prob_visible_given_hidden(&self, h: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(h.len(), self.hidden_count(), "hidden length mismatch");
        (self.w.t().dot(&h) + &self.b).mapv(sigmoid)
    }

    /// Run `k` steps of alternating Gibbs sampling from `v0`.
    ///
    /// Hidden states are Bernoulli samples at every step but the last, where
    /// the conditional probabilities are kept; intermediate visible states
    /// are Bernoulli samples and the final `vk` is the conditional mean.
    /// Keeping means at the boundary lowers the variance of the CD estimate.
    pub fn gibbs_chain(&self, v0: ArrayView1<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> GibbsChain {
        assert!(k >= 1, "k must be at least 1");
        let h0probs = self.prob_hidden_given_visible(v0);
        let mut h_state = sample_bernoulli(&h0probs, rng);
        let mut vk = Array1::zeros(self.visible_count());
        let mut hkprobs = h0probs.clone();
        for step in 1..=k {
            let v_probs = self.prob_visible_given_hidden(h_state.view());
            vk = if step < k { sample_bernoulli(&v_probs, rng) } else { v_probs };
            hkprobs = self.prob_hidden_given_visible(vk.view());
            if step < k {
                h_state = sample_bernoulli(&hkprobs, rng);
            }
        }
        GibbsChain { vk, h0probs, hkprobs }
    }

    /// CD-k estimate of the log-likelihood gradient at `v0`:
    /// `dW = h0probs v0' - hkprobs vk'`, `db = v0 - vk`, `dc = h0probs - hkprobs`.
    pub fn cd_k_gradient(
        &self,
        v0: ArrayView1<'_, f64>,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> RbmGradient {
        let chain = self.gibbs_chain(v0, k, rng);
        let mut d_w = Array2::zeros(self.w.raw_dim());
        for (i, mut row) in d_w.rows_mut().into_iter().enumerate() {
            row.scaled_add(chain.h0probs[i], &v0);
            row.scaled_add(-chain.hkprobs[i], &chain.vk);
        }
        RbmGradient { d_w, d_b: &v0 - &chain.vk, d_c: &chain.h0probs - &chain.hkprobs }
    }

    fn enumeration_guard(&self) -> Result<(), RbmError> {
        let (m, n) = (self.visible_count(), self.hidden_count());
        if m + n > 24 {
            return Err(RbmError::TooLargeToEnumerate { visible: m, hidden: n });
        }
        Ok(())
    }

    /// Partition function `Z = sum over v in {0,1}^m, h in {0,1}^n of e^{-E}`.
    ///
    /// The hidden sum has the closed form `e^{b'v} prod_i (1 + e^{c_i + W_i v})`,
    /// so enumeration runs over visible states only.
    pub fn exact_partition(&self) -> Result<f64, RbmError> {
        self.enumeration_guard()?;
        let m = self.visible_count();
        let mut z = 0.0;
        for bits in 0..(1u32 << m) {
            let v = Array1::from_shape_fn(m, |j| f64::from(bits >> j & 1));
            let act = self.w.dot(&v) + &self.c;
            let hidden_sum: f64 = act.iter().map(|&a| 1.0 + a.exp()).product();
            z += (self.b.dot(&v)).exp() * hidden_sum;
        }
        Ok(z)
    }

    /// Exact `log p(v0)` via enumeration; the oracle the gradient code is
    /// checked against with finite differences.
    pub fn exact_log_likelihood(&self, v0: ArrayView1<'_, f64>) -> Result<f64, RbmError> {
        self.enumeration_guard()?;
        let act = self.w.dot(&v0) + &self.c;
        let unnorm = self.b.dot(&v0) + act.iter().map(|&a| softplus(a)).sum::<f64>();
        Ok(unnorm - self.exact_partition()?.ln())
    }

    /// Exact log-likelihood gradient at `v0`: data expectation minus model
    /// expectation, the model side summed over all binary visible states.
    pub fn exact_gradient(&self, v0: ArrayView1<'_, f64>) -> Result<RbmGradient, RbmError> {
        self.enumeration_guard()?;
        let (m, n) = (self.visible_count(), self.hidden_count());
        let ph0 = self.prob_hidden_given_visible(v0);

        let mut neg_w = Array2::zeros((n, m));
        let mut neg_b = Array1::zeros(m);
        let mut neg_c = Array1::zeros(n);
        let mut z = 0.0;
        for bits in 0..(1u32 << m) {
            let v = Array1::from_shape_fn(m, |j| f64::from(bits >> j & 1));
            let act = self.w.dot(&v) + &self.c;
            let weight = (self.b.dot(&v)).exp()
                * act.iter().map(|&a| 1.0 + a.exp()).product::<f64>();
            let ph = act.mapv(sigmoid);
            for (i, mut row) in neg_w.rows_mut().into_iter().enumerate() {
                row.scaled_add(weight * ph[i], &v);
            }
            neg_b.scaled_add(weight, &v);
            neg_c.scaled_add(weight, &ph);
            z += weight;
        }
        neg_w /= z;
        neg_b /= z;
        neg_c /= z;

        let mut d_w = -neg_w;
        for (i, mut row) in d_w.rows_mut().into_iter().enumerate() {
            row.scaled_add(ph0[i], &v0);
        }
        Ok(RbmGradient { d_w, d_b: &v0 - &neg_b, d_c: ph0 - neg_c })
    }

    /// Hidden activation probabilities for a whole sample matrix.
    pub fn hidden_activations(&self, rows: &Array2<f64>) -> Array2<f64> {
        assert_eq!(rows.ncols(), self.visible_count(), "sample width mismatch");
        let mut out = rows.dot(&self.w.t());
        out += &self.c.view().insert_axis(Axis(0));
        out.mapv_inplace(sigmoid);
        out
    }
}

/// Deterministic per-row hidden activations; feeds the next RBM in a stack.
pub fn propagate_up(rbm: &Rbm, data: &Dataset) -> Dataset {
    Dataset { samples: rbm.hidden_activations(&data.samples) }
}

/// Train a freshly initialized RBM with CD-k over the given mini-batches.
pub fn train_rbm(
    batches: &[Batch],
    visible: usize,
    hidden: usize,
    config: &CdConfig,
) -> Result<Rbm, RbmError> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rbm = Rbm::new(visible, hidden, &mut init_rng);
    train_rbm_from(rbm, batches, config)
}

/// Train an existing RBM in place of `train_rbm`'s fresh initialization.
///
/// Sampling consumes a single generator seeded from `config.seed`, visiting
/// samples in batch order then row order, so a run is reproducible by
/// replaying `cd_k_gradient` against a generator cloned at the same point.
/// Updates follow the momentum rule
/// `delta <- momentum * delta + learningRate * (gradient - weightCost * W)`
/// with the decay term applied to weights only, and are applied after every
/// mini-batch using the batch-mean gradient.
pub fn train_rbm_from(
    mut rbm: Rbm,
    batches: &[Batch],
    config: &CdConfig,
) -> Result<Rbm, RbmError> {
    config.validate()?;
    if batches.is_empty() || batches.iter().all(|b| b.is_empty()) {
        return Err(RbmError::EmptyTrainingSet);
    }
    for batch in batches {
        if batch.width() != rbm.visible_count() {
            return Err(RbmError::DimensionMismatch {
                expected: rbm.visible_count(),
                found: batch.width(),
            });
        }
    }

    let (n, m) = (rbm.hidden_count(), rbm.visible_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vel = RbmGradient::zeros(n, m);
    for epoch in 0..config.epochs {
        let momentum = if epoch < config.momentum_switch_epoch {
            config.momentum_initial
        } else {
            config.momentum_final
        };
        for batch in batches {
            if batch.is_empty() {
                continue;
            }
            let mut grad = RbmGradient::zeros(n, m);
            for v0 in batch.samples.rows() {
                let g = rbm.cd_k_gradient(v0, config.k, &mut rng);
                grad.d_w += &g.d_w;
                grad.d_b += &g.d_b;
                grad.d_c += &g.d_c;
            }
            let scale = 1.0 / batch.len() as f64;
            let lr = config.learning_rate;
            vel.d_w *= momentum;
            vel.d_w.scaled_add(lr * scale, &grad.d_w);
            vel.d_w.scaled_add(-lr * config.weight_cost, &rbm.w);
            vel.d_b *= momentum;
            vel.d_b.scaled_add(lr * scale, &grad.d_b);
            vel.d_c *= momentum;
            vel.d_c.scaled_add(lr * scale, &grad.d_c);
            rbm.w += &vel.d_w;
            rbm.b += &vel.d_b;
            rbm.c += &vel.d_c;
        }
    }
    Ok(rbm)
}

/// Greedy layer-wise pretraining: train one RBM per consecutive size pair,
/// propagating activations upward between layers. Layer `i` trains under
/// seed `config.seed + i`.
pub fn pretrain_stack(
    batches: &[Batch],
    layer_sizes: &[usize],
    config: &CdConfig,
) -> Result<Vec<Rbm>, RbmError> {
    if layer_sizes.len() < 2 {
        return Err(RbmError::InvalidConfig("need at least two layer sizes".into()));
    }
    let mut current: Vec<Batch> = batches.to_vec();
    let mut stack = Vec::with_capacity(layer_sizes.len() - 1);
    for (i, pair) in layer_sizes.windows(2).enumerate() {
        let layer_config = CdConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
        let rbm = train_rbm(&current, pair[0], pair[1], &layer_config)?;
        current = current
            .iter()
            .map(|b| Batch { samples: rbm.hidden_activations(&b.samples) })
            .collect();
        stack.push(rbm);
    }
    Ok(stack)
}
