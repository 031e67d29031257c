//! Feedforward autoencoder machinery: sigmoid layers, unrolling a pretrained
//! RBM stack into a deep autoencoder, mean-squared-error backpropagation, and
//! a single-hidden-layer baseline trained by full-batch conjugate gradient.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Batch, Dataset};
use crate::rbm::Rbm;

#[derive(Debug, Error)]
pub enum DeepnetError {
    #[error("stack dimensions broken between layer {index} and {next}: {hidden} vs {visible}")]
    DimensionChainBroken { index: usize, next: usize, hidden: usize, visible: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("line search failed to find a descent step")]
    LineSearchFailure,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
}

/// `1 / (1 + e^{-x})`, computed on the branch that never overflows.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out x in.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn output_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    DeepAe,
    MlpAe,
}

/// Autoencoder: adjacent layer widths chain and the output width equals the
/// input width.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub kind: NetworkKind,
}

impl Network {
    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, Layer::input_width)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_width)
    }

    /// Layer widths from input to output, e.g. `[784, 400, 784]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut widths = vec![self.input_width()];
        widths.extend(self.layers.iter().map(Layer::output_width));
        widths
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Activations per layer; entry 0 is the input, the last entry the
    /// reconstruction.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Vec<Array1<f64>> {
        assert_eq!(x.len(), self.input_width(), "input width mismatch");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for layer in &self.layers {
            let mut a = layer.weights.dot(acts.last().unwrap()) + &layer.biases;
            a.mapv_inplace(|v| layer.activation.apply(v));
            acts.push(a);
        }
        acts
    }

    pub fn reconstruct(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.forward(x).pop().unwrap()
    }

    /// Row-wise forward pass over a whole batch; entry 0 is the batch itself.
    pub fn forward_batch(&self, rows: &Array2<f64>) -> Vec<Array2<f64>> {
        assert_eq!(rows.ncols(), self.input_width(), "input width mismatch");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(rows.clone());
        for layer in &self.layers {
            let mut a = acts.last().unwrap().dot(&layer.weights.t());
            a += &layer.biases.view().insert_axis(Axis(0));
            a.mapv_inplace(|v| layer.activation.apply(v));
            acts.push(a);
        }
        acts
    }
}

/// Turn a pretrained stack into a deep autoencoder: encoder layer i carries
/// (W_i, c_i), the mirrored decoder layer carries (W_i', b_i). Decoder
/// parameters are independent copies, so fine-tuning updates encoder and
/// decoder separately.
pub fn unroll(stack: &[Rbm]) -> Result<Network, DeepnetError> {
    if stack.is_empty() {
        return Err(DeepnetError::InvalidConfig("cannot unroll an empty stack".into()));
    }
    for (i, pair) in stack.windows(2).enumerate() {
        if pair[0].hidden_count() != pair[1].visible_count() {
            return Err(DeepnetError::DimensionChainBroken {
                index: i,
                next: i + 1,
                hidden: pair[0].hidden_count(),
                visible: pair[1].visible_count(),
            });
        }
    }
    let mut layers = Vec::with_capacity(2 * stack.len());
    for rbm in stack {
        layers.push(Layer {
            weights: rbm.w.clone(),
            biases: rbm.c.clone(),
            activation: Activation::Sigmoid,
        });
    }
    for rbm in stack.iter().rev() {
        layers.push(Layer {
            weights: rbm.w.t().to_owned(),
            biases: rbm.b.clone(),
            activation: Activation::Sigmoid,
        });
    }
    Ok(Network { layers, kind: NetworkKind::DeepAe })
}

/// Mean over samples and components of the squared reconstruction error.
pub fn mse_loss(net: &Network, batch: &Batch) -> f64 {
    let acts = net.forward_batch(&batch.samples);
    let z = acts.last().unwrap();
    let diff = z - &batch.samples;
    diff.mapv(|d| d * d).mean().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub d_weights: Array2<f64>,
    pub d_biases: Array1<f64>,
}

/// Exact gradient of `mse_loss` for every weight and bias, plus the loss
/// itself from the same forward pass.
pub fn backprop(net: &Network, batch: &Batch) -> (Vec<LayerGradient>, f64) {
    let acts = net.forward_batch(&batch.samples);
    let samples = batch.len() as f64;
    let width = batch.width() as f64;
    let z = acts.last().unwrap();
    let diff = z - &batch.samples;
    let loss = diff.mapv(|d| d * d).mean().unwrap_or(0.0);

    // delta_L = dL/d(pre-activation) at the output layer.
    let mut delta = diff.mapv(|d| 2.0 * d / (samples * width));
    azip_derivative(&mut delta, z, net.layers.last().unwrap().activation);

    let mut grads = vec![
        LayerGradient { d_weights: Array2::zeros((0, 0)), d_biases: Array1::zeros(0) };
        net.layers.len()
    ];
    for l in (0..net.layers.len()).rev() {
        grads[l] = LayerGradient {
            d_weights: delta.t().dot(&acts[l]),
            d_biases: delta.sum_axis(Axis(0)),
        };
        if l > 0 {
            let mut next = delta.dot(&net.layers[l].weights);
            azip_derivative(&mut next, &acts[l], net.layers[l - 1].activation);
            delta = next;
        }
    }
    (grads, loss)
}

fn azip_derivative(delta: &mut Array2<f64>, output: &Array2<f64>, activation: Activation) {
    ndarray::Zip::from(delta)
        .and(output)
        .for_each(|d, &y| *d *= activation.derivative_from_output(y));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    SgdMomentum,
    ConjugateGradient,
}

#[derive(Debug, Clone)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            epochs: 1000,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            optimizer: Optimizer::SgdMomentum,
        }
    }
}

/// Fine-tune on `mse_loss` with the configured optimizer.
///
/// `SgdMomentum` (the default) runs mini-batch gradient descent with
/// momentum — an update after every batch, batches visited in the order
/// given. `ConjugateGradient` concatenates the batches and hands the result
/// to [`train_conjugate_gradient`], for which each epoch is one full-batch
/// step; `learning_rate` and `momentum` are then unused. Returns the tuned
/// network and the per-epoch mean training loss (measured before each
/// update).
pub fn fine_tune(
    net: &Network,
    batches: &[Batch],
    config: &FineTuneConfig,
) -> Result<(Network, Vec<f64>), DeepnetError> {
    if batches.is_empty() || batches.iter().all(Batch::is_empty) {
        return Err(DeepnetError::EmptyTrainingSet);
    }
    for batch in batches {
        if batch.width() != net.input_width() {
            return Err(DeepnetError::DimensionMismatch {
                expected: net.input_width(),
                found: batch.width(),
            });
        }
    }
    if config.optimizer == Optimizer::ConjugateGradient {
        let total: usize = batches.iter().map(Batch::len).sum();
        let mut samples = Array2::zeros((total, net.input_width()));
        let mut next = 0;
        for batch in batches {
            for row in batch.samples.rows() {
                samples.row_mut(next).assign(&row);
                next += 1;
            }
        }
        return train_conjugate_gradient(net, &Dataset { samples }, config.epochs, config.seed);
    }
    if !(config.learning_rate >= 0.0) {
        return Err(DeepnetError::InvalidConfig("learning rate must be non-negative".into()));
    }
    if !(0.0..1.0).contains(&config.momentum) {
        return Err(DeepnetError::InvalidConfig("momentum must lie in [0,1)".into()));
    }

    let mut net = net.clone();
    let mut velocity: Vec<LayerGradient> = net
        .layers
        .iter()
        .map(|l| LayerGradient {
            d_weights: Array2::zeros(l.weights.raw_dim()),
            d_biases: Array1::zeros(l.biases.raw_dim()),
        })
        .collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for batch in batches {
            if batch.is_empty() {
                continue;
            }
            let (grads, loss) = backprop(&net, batch);
            if !loss.is_finite() {
                return Err(DeepnetError::Divergence { epoch });
            }
            epoch_loss += loss;
            counted += 1;
            for (l, grad) in grads.iter().enumerate() {
                velocity[l].d_weights *= config.momentum;
                velocity[l].d_weights.scaled_add(-config.learning_rate, &grad.d_weights);
                velocity[l].d_biases *= config.momentum;
                velocity[l].d_biases.scaled_add(-config.learning_rate, &grad.d_biases);
                net.layers[l].weights += &velocity[l].d_weights;
                net.layers[l].biases += &velocity[l].d_biases;
            }
        }
        trace.push(epoch_loss / counted as f64);
    }
    Ok((net, trace))
}

/// Single-hidden-layer sigmoid autoencoder `input-hidden-input` with
/// Glorot-uniform weights and zero biases.
pub fn build_mlp_ae(input_width: usize, hidden_width: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |out: usize, inp: usize| {
        let limit = (6.0 / (out + inp) as f64).sqrt();
        Array2::from_shape_fn((out, inp), |_| rng.gen_range(-limit..limit))
    };
    let layers = vec![
        Layer {
            weights: glorot(hidden_width, input_width),
            biases: Array1::zeros(hidden_width),
            activation: Activation::Sigmoid,
        },
        Layer {
            weights: glorot(input_width, hidden_width),
            biases: Array1::zeros(input_width),
            activation: Activation::Sigmoid,
        },
    ];
    Network { layers, kind: NetworkKind::MlpAe }
}

fn flatten_params(net: &Network) -> Array1<f64> {
    let mut theta = Vec::with_capacity(net.parameter_count());
    for layer in &net.layers {
        theta.extend(layer.weights.iter());
        theta.extend(layer.biases.iter());
    }
    Array1::from_vec(theta)
}

fn unflatten_params(net: &mut Network, theta: &Array1<f64>) {
    let mut offset = 0;
    for layer in &mut net.layers {
        for w in layer.weights.iter_mut() {
            *w = theta[offset];
            offset += 1;
        }
        for b in layer.biases.iter_mut() {
            *b = theta[offset];
            offset += 1;
        }
    }
    debug_assert_eq!(offset, theta.len());
}

fn flatten_grads(grads: &[LayerGradient]) -> Array1<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.d_weights.iter());
        out.extend(g.d_biases.iter());
    }
    Array1::from_vec(out)
}

/// Full-batch conjugate-gradient minimization of `mse_loss` with
/// Polak–Ribière(+) direction updates and restarts (every parameter-count
/// iterations or on a non-descent direction). The line search fits a parabola
/// through the first trial step and backtracks under an Armijo test; if it
/// stalls, a steepest-descent step is tried before giving up. Each epoch is
/// one accepted step, so the returned loss trace is non-increasing. The
/// procedure is deterministic; `_seed` is accepted for interface parity with
/// the other trainers.
pub fn train_conjugate_gradient(
    net: &Network,
    data: &Dataset,
    epochs: usize,
    _seed: u64,
) -> Result<(Network, Vec<f64>), DeepnetError> {
    if data.count() == 0 {
        return Err(DeepnetError::EmptyTrainingSet);
    }
    if data.width() != net.input_width() {
        return Err(DeepnetError::DimensionMismatch {
            expected: net.input_width(),
            found: data.width(),
        });
    }

    let batch = Batch { samples: data.samples.clone() };
    let mut net = net.clone();
    let mut theta = flatten_params(&net);
    let param_count = theta.len();

    let eval = |net: &mut Network, theta: &Array1<f64>| -> (f64, Array1<f64>) {
        unflatten_params(net, theta);
        let (grads, loss) = backprop(net, &batch);
        (loss, flatten_grads(&grads))
    };
    let loss_at = |net: &mut Network, theta: &Array1<f64>| -> f64 {
        unflatten_params(net, theta);
        mse_loss(net, &batch)
    };

    let (mut loss, mut grad) = eval(&mut net, &theta);
    if !loss.is_finite() {
        return Err(DeepnetError::Divergence { epoch: 0 });
    }
    let mut direction = -&grad;
    let mut trace = Vec::with_capacity(epochs);
    let mut prev_step = 1.0_f64;

    for epoch in 0..epochs {
        let grad_norm_sq = grad.dot(&grad);
        if grad_norm_sq <= f64::EPSILON * f64::EPSILON {
            break;
        }
        if direction.dot(&grad) >= 0.0 {
            direction = -&grad;
        }

        let step = match line_search(&mut net, &theta, &direction, loss, grad.dot(&direction), prev_step, &loss_at)
        {
            Some(t) => t,
            None => {
                // Fall back to plain steepest descent before concluding the
                // loss sits at its precision floor.
                direction = -&grad;
                match line_search(&mut net, &theta, &direction, loss, -grad_norm_sq, prev_step, &loss_at) {
                    Some(t) => t,
                    None => break,
                }
            }
        };
        prev_step = step;
        theta.scaled_add(step, &direction);

        let (new_loss, new_grad) = eval(&mut net, &theta);
        if !new_loss.is_finite() {
            return Err(DeepnetError::Divergence { epoch });
        }
        // Polak–Ribière(+) with periodic restart.
        let beta = if (epoch + 1) % param_count == 0 {
            0.0
        } else {
            (new_grad.dot(&new_grad) - new_grad.dot(&grad)) / grad_norm_sq
        };
        let beta = beta.max(0.0);
        direction = direction.mapv(|d| beta * d) - &new_grad;
        loss = new_loss;
        grad = new_grad;
        trace.push(loss);
    }
    unflatten_params(&mut net, &theta);
    Ok((net, trace))
}

/// Armijo line search with one quadratic-interpolation refinement. Returns a
/// step achieving sufficient decrease, or None at the precision floor.
fn line_search(
    net: &mut Network,
    theta: &Array1<f64>,
    direction: &Array1<f64>,
    loss0: f64,
    slope0: f64,
    prev_step: f64,
    loss_at: &dyn Fn(&mut Network, &Array1<f64>) -> f64,
) -> Option<f64> {
    if slope0 >= 0.0 {
        return None;
    }
    const C1: f64 = 1e-4;
    let armijo = |t: f64, value: f64| value <= loss0 + C1 * t * slope0;
    let probe = |net: &mut Network, t: f64| loss_at(net, &(theta + &direction.mapv(|d| t * d)));

    let mut t = (2.0 * prev_step).clamp(1e-12, 1e6);
    let mut value = probe(net, t);

    // Exact minimizer of the parabola through (0, loss0) with slope slope0
    // and the point (t, value); exact line search on quadratic objectives.
    let denom = 2.0 * (value - loss0 - slope0 * t);
    if denom > 0.0 {
        let refined = (-slope0 * t * t / denom).clamp(1e-2 * t, 1e2 * t);
        let refined_value = probe(net, refined);
        if refined_value < value || !armijo(t, value) {
            t = refined;
            value = refined_value;
        }
    }

    for _ in 0..60 {
        if armijo(t, value) && value.is_finite() {
            return Some(t);
        }
        t *= 0.5;
        if t < 1e-20 {
            return None;
        }
        value = probe(net, t);
    }
    None
}
