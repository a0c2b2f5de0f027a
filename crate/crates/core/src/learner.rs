//! Local training over flat parameter vectors: dense linear, logistic
//! (softmax) and MLP models with mini-batch SGD.
//!
//! Parameters are laid out layer by layer, each layer as its `out × in`
//! weight matrix (row-major) followed by its `out` biases.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Targets};
use crate::param::ParamVector;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("parameter vector has {got} entries, model needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset does not fit the model: {0}")]
    DataMismatch(String),
    #[error("accuracy is only defined for classifiers")]
    NotClassifier,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu => z.max(S::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => S::one() / (S::one() + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative<S: Scalar>(self, z: S, a: S) -> S {
        match self {
            Activation::Relu => {
                if z > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - a * a,
            Activation::Sigmoid => a * (S::one() - a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Squared-error regression with a single real output.
    LinearRegression,
    /// Softmax cross-entropy over `output_dim` classes.
    LogisticRegression,
    /// Fully connected network with softmax cross-entropy output.
    Mlp { hidden: Vec<usize>, activation: Activation },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize) -> Self {
        Self { kind: ModelKind::LinearRegression, input_dim, output_dim: 1 }
    }

    pub fn logistic(input_dim: usize, classes: usize) -> Self {
        Self { kind: ModelKind::LogisticRegression, input_dim, output_dim: classes }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, classes: usize, activation: Activation) -> Self {
        Self { kind: ModelKind::Mlp { hidden, activation }, input_dim, output_dim: classes }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self.kind, ModelKind::LinearRegression)
    }

    /// Layer widths from input to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        if let ModelKind::Mlp { hidden, .. } = &self.kind {
            sizes.extend(hidden);
        }
        sizes.push(self.output_dim);
        sizes
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.layer_sizes().contains(&0) {
            return Err(LearnerError::InvalidModel("layer widths must be positive".into()));
        }
        match self.kind {
            ModelKind::LinearRegression if self.output_dim != 1 => {
                Err(LearnerError::InvalidModel("linear regression has exactly one output".into()))
            }
            ModelKind::LogisticRegression | ModelKind::Mlp { .. } if self.output_dim < 2 => {
                Err(LearnerError::InvalidModel("classifiers need at least two classes".into()))
            }
            _ => Ok(()),
        }
    }

    fn activation(&self) -> Option<Activation> {
        match &self.kind {
            ModelKind::Mlp { activation, .. } => Some(*activation),
            _ => None,
        }
    }
}

/// Flattened parameter count, biases included.
pub fn param_count(spec: &ModelSpec) -> usize {
    spec.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs_per_round: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { batch_size: 32, learning_rate: 0.01, epochs_per_round: 5, seed: 0 }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.batch_size == 0 {
            return Err(LearnerError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs_per_round == 0 {
            return Err(LearnerError::InvalidConfig("epochs_per_round must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(LearnerError::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Seed for one training call, derived from a base seed, a per-holon stream
/// and the round number (splitmix64 finalizer).
pub fn round_seed(base: u64, stream: u64, round: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(round.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random initial parameters: weights `N(0, 1/fan_in)`, zero biases.
pub fn init_params<S: Scalar, R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> ParamVector<S> {
    let mut out = Vec::with_capacity(param_count(spec));
    for w in spec.layer_sizes().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = (1.0 / fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            let z: f64 = StandardNormal.sample(rng);
            out.push(S::lit(std * z));
        }
        out.extend(std::iter::repeat_n(S::zero(), fan_out));
    }
    ParamVector::new(out)
}

fn check<S: Scalar>(spec: &ModelSpec, theta: &[S], data: &Dataset<S>) -> Result<(), LearnerError> {
    spec.validate()?;
    let expected = param_count(spec);
    if theta.len() != expected {
        return Err(LearnerError::DimensionMismatch { expected, got: theta.len() });
    }
    if data.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    if data.dim() != spec.input_dim {
        return Err(LearnerError::DataMismatch(format!(
            "feature dimension {} but model input {}",
            data.dim(),
            spec.input_dim
        )));
    }
    match (data.targets(), spec.is_classifier()) {
        (Targets::Real(_), false) => Ok(()),
        (Targets::Class { num_classes, .. }, true) if *num_classes == spec.output_dim => Ok(()),
        (Targets::Class { num_classes, .. }, true) => Err(LearnerError::DataMismatch(format!(
            "{num_classes} classes but model has {} outputs",
            spec.output_dim
        ))),
        _ => Err(LearnerError::DataMismatch("target kind does not match model".into())),
    }
}

/// Reusable per-sample buffers for forward/backward passes.
struct Workspace<S> {
    sizes: Vec<usize>,
    /// Offsets of each layer's weights in θ.
    offsets: Vec<usize>,
    /// Pre-activations per layer (index 0 unused).
    z: Vec<Vec<S>>,
    /// Activations per layer; `a[0]` is the input.
    a: Vec<Vec<S>>,
    delta: Vec<Vec<S>>,
    activation: Option<Activation>,
}

impl<S: Scalar> Workspace<S> {
    fn new(spec: &ModelSpec) -> Self {
        let sizes = spec.layer_sizes();
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        Self {
            z: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            a: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            delta: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            offsets,
            sizes,
            activation: spec.activation(),
        }
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Fills `z`/`a`; the output layer's `a` holds raw outputs (logits or
    /// the regression prediction).
    fn forward(&mut self, theta: &[S], x: &[S]) {
        self.a[0].copy_from_slice(x);
        let last = self.layers();
        for l in 1..=last {
            let (n_in, n_out) = (self.sizes[l - 1], self.sizes[l]);
            let w = &theta[self.offsets[l - 1]..self.offsets[l - 1] + n_in * n_out];
            let b = &theta[self.offsets[l - 1] + n_in * n_out..self.offsets[l - 1] + n_in * n_out + n_out];
            let (prev, rest) = self.a.split_at_mut(l);
            let input = &prev[l - 1];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for (wi, xi) in row.iter().zip(input) {
                    s = s + *wi * *xi;
                }
                self.z[l][o] = s;
                rest[0][o] = match (l < last, self.activation) {
                    (true, Some(act)) => act.apply(s),
                    _ => s,
                };
            }
        }
    }

    /// Loss of the last forward pass, and the output-layer delta.
    fn output_loss(&mut self, target: Target<S>) -> S {
        let last = self.layers();
        let out = &self.a[last];
        let delta = &mut self.delta[last];
        match target {
            Target::Real(y) => {
                let r = out[0] - y;
                delta[0] = r + r;
                r * r
            }
            Target::Class(c) => {
                let m = out.iter().copied().fold(S::neg_infinity(), S::max);
                let mut sum = S::zero();
                for (d, &v) in delta.iter_mut().zip(out) {
                    *d = (v - m).exp();
                    sum = sum + *d;
                }
                for d in delta.iter_mut() {
                    *d = *d / sum;
                }
                delta[c] = delta[c] - S::one();
                sum.ln() + m - out[c]
            }
        }
    }

    /// Accumulates the gradient of the last sample into `grad`.
    fn backward(&mut self, theta: &[S], grad: &mut [S]) {
        for l in (1..=self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l - 1], self.sizes[l]);
            let off = self.offsets[l - 1];
            for o in 0..n_out {
                let d = self.delta[l][o];
                let g_row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, &x) in g_row.iter_mut().zip(&self.a[l - 1]) {
                    *g = *g + d * x;
                }
                grad[off + n_in * n_out + o] = grad[off + n_in * n_out + o] + d;
            }
            if l > 1 {
                let act = self.activation.expect("hidden layers only exist in MLPs");
                let w = &theta[off..off + n_in * n_out];
                for i in 0..n_in {
                    let mut s = S::zero();
                    for o in 0..n_out {
                        s = s + w[o * n_in + i] * self.delta[l][o];
                    }
                    self.delta[l - 1][i] = s * act.derivative(self.z[l - 1][i], self.a[l - 1][i]);
                }
            }
        }
    }

    fn predict_class(&self) -> usize {
        let out = &self.a[self.layers()];
        let mut best = 0;
        for (k, &v) in out.iter().enumerate().skip(1) {
            if v > out[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Clone, Copy)]
enum Target<S> {
    Real(S),
    Class(usize),
}

fn target<S: Scalar>(data: &Dataset<S>, i: usize) -> Target<S> {
    match data.targets() {
        Targets::Real(y) => Target::Real(y[i]),
        Targets::Class { labels, .. } => Target::Class(labels[i]),
    }
}

/// Mean per-sample loss: squared error for regression, cross-entropy for
/// classifiers.
pub fn loss<S: Scalar>(spec: &ModelSpec, theta: &[S], data: &Dataset<S>) -> Result<S, LearnerError> {
    check(spec, theta, data)?;
    let mut ws = Workspace::new(spec);
    let mut total = S::zero();
    for i in 0..data.len() {
        ws.forward(theta, data.row(i));
        total = total + ws.output_loss(target(data, i));
    }
    Ok(total / S::from_count(data.len()))
}

/// Mean gradient of [`loss`] over `batch`.
pub fn gradient<S: Scalar>(spec: &ModelSpec, theta: &[S], batch: &Dataset<S>) -> Result<ParamVector<S>, LearnerError> {
    check(spec, theta, batch)?;
    let idx: Vec<usize> = (0..batch.len()).collect();
    let mut ws = Workspace::new(spec);
    let mut grad = vec![S::zero(); theta.len()];
    batch_gradient(&mut ws, theta, batch, &idx, &mut grad);
    Ok(ParamVector::new(grad))
}

fn batch_gradient<S: Scalar>(ws: &mut Workspace<S>, theta: &[S], data: &Dataset<S>, idx: &[usize], grad: &mut [S]) {
    grad.iter_mut().for_each(|g| *g = S::zero());
    for &i in idx {
        ws.forward(theta, data.row(i));
        ws.output_loss(target(data, i));
        ws.backward(theta, grad);
    }
    let n = S::from_count(idx.len());
    for g in grad.iter_mut() {
        *g = *g / n;
    }
}

/// `epochs_per_round` passes of mini-batch SGD with a fixed learning rate.
/// Each epoch reshuffles with `rng`; the last short batch is kept and every
/// batch is processed in ascending row order.
pub fn train_local<S: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec,
    theta: &ParamVector<S>,
    data: &Dataset<S>,
    cfg: &TrainingConfig,
    rng: &mut R,
) -> Result<ParamVector<S>, LearnerError> {
    check(spec, theta, data)?;
    cfg.validate()?;
    let lr = S::lit(cfg.learning_rate);
    let mut ws = Workspace::new(spec);
    let mut theta = theta.clone();
    let mut grad = vec![S::zero(); theta.dim()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs_per_round {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            batch_gradient(&mut ws, &theta, data, &batch, &mut grad);
            theta.axpy_neg(lr, &grad);
        }
    }
    Ok(theta)
}

/// Fraction of argmax-correct predictions; ties go to the lowest class.
pub fn evaluate<S: Scalar>(spec: &ModelSpec, theta: &[S], test: &Dataset<S>) -> Result<f64, LearnerError> {
    if !spec.is_classifier() {
        return Err(LearnerError::NotClassifier);
    }
    check(spec, theta, test)?;
    let labels = test.labels().expect("checked classifier targets");
    let mut ws = Workspace::new(spec);
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &label)| {
            ws.forward(theta, test.row(i));
            ws.predict_class() == label
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}
