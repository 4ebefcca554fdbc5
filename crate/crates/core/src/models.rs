//! Differentiable classifiers with hand-written cross-entropy gradients.
//!
//! Parameter layout is flat. Linear and MLP layers store a row-major
//! `out × in` weight block followed by `out` biases; the binary logistic
//! model stores `input_dim` weights followed by one bias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::tilt::LossSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticBinary,
    SoftmaxLinear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
}

/// A labelled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

impl ModelSpec {
    pub fn logistic_binary(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::LogisticBinary,
            input_dim,
            num_classes: 2,
            hidden_dims: Vec::new(),
        }
    }

    pub fn softmax_linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::SoftmaxLinear,
            input_dim,
            num_classes,
            hidden_dims: Vec::new(),
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            input_dim,
            num_classes,
            hidden_dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidModel("input_dim must be positive".into()));
        }
        match self.kind {
            ModelKind::LogisticBinary if self.num_classes != 2 => Err(Error::InvalidModel(format!(
                "logistic model needs 2 classes, got {}",
                self.num_classes
            ))),
            _ if self.num_classes < 2 => Err(Error::InvalidModel(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            ))),
            ModelKind::Mlp if self.hidden_dims.contains(&0) => {
                Err(Error::InvalidModel("hidden layer widths must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Layer widths from input to output (linear models have no hidden layer).
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        if self.kind == ModelKind::Mlp {
            dims.extend(&self.hidden_dims);
        }
        dims.push(self.num_classes);
        dims
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::LogisticBinary => self.input_dim + 1,
            _ => self.layer_dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
        }
    }

    fn check(&self, params: &[f64], features: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        if features.len() != self.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.input_dim,
                actual: features.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }
}

/// Deterministic initial parameters: zeros for linear models, scaled uniform
/// weights (`±1/√fan_in`) with zero biases for the MLP.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut params = vec![0.0; spec.param_count()];
    if spec.kind == ModelKind::Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in spec.layer_dims().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for p in &mut params[offset..offset + fan_in * fan_out] {
                *p = dist.sample(&mut rng);
            }
            offset += fan_in * fan_out + fan_out;
        }
    }
    ParamVector::new(params)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(log Σ e^{s}, softmax(s))`
fn log_softmax_parts(scores: &[f64]) -> (f64, Vec<f64>) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    (m + total.ln(), exps.into_iter().map(|e| e / total).collect())
}

/// Forward pass through the layer stack. Returns the pre-activations of every
/// layer; the last entry holds the class scores.
fn forward(dims: &[usize], params: &[f64], features: &[f64]) -> Vec<Vec<f64>> {
    let mut pre = Vec::with_capacity(dims.len() - 1);
    let mut input: Vec<f64> = features.to_vec();
    let mut offset = 0;
    let layers = dims.len() - 1;
    for (l, w) in dims.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[offset..offset + n_in * n_out];
        let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let z: Vec<f64> = (0..n_out)
            .map(|o| dot(&weights[o * n_in..(o + 1) * n_in], &input) + bias[o])
            .collect();
        if l + 1 < layers {
            input = z.iter().map(|v| v.max(0.0)).collect();
        }
        pre.push(z);
        offset += n_in * n_out + n_out;
    }
    pre
}

/// Unnormalized class scores.
pub fn class_scores(spec: &ModelSpec, params: &[f64], features: &[f64]) -> Result<Vec<f64>> {
    spec.check(params, features)?;
    Ok(match spec.kind {
        ModelKind::LogisticBinary => {
            let d = spec.input_dim;
            vec![0.0, dot(&params[..d], features) + params[d]]
        }
        _ => forward(&spec.layer_dims(), params, features)
            .pop()
            .expect("at least one layer"),
    })
}

/// Argmax of the class scores, ties broken toward the smallest index.
pub fn predict(spec: &ModelSpec, params: &[f64], features: &[f64]) -> Result<usize> {
    let scores = class_scores(spec, params, features)?;
    let mut best = 0;
    for (k, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Cross-entropy loss of one example, without the gradient.
pub fn loss(spec: &ModelSpec, params: &[f64], example: &Example) -> Result<f64> {
    spec.check_label(example.label)?;
    let scores = class_scores(spec, params, &example.features)?;
    Ok(match spec.kind {
        ModelKind::LogisticBinary => {
            let z = scores[1];
            if example.label == 1 {
                softplus(-z)
            } else {
                softplus(z)
            }
        }
        _ => {
            let (lse, _) = log_softmax_parts(&scores);
            lse - scores[example.label]
        }
    })
}

/// Cross-entropy loss of one example and its exact parameter gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &[f64], example: &Example) -> Result<LossSample> {
    spec.check(params, &example.features)?;
    spec.check_label(example.label)?;
    let x = &example.features;
    let mut grad = vec![0.0; params.len()];
    let value = match spec.kind {
        ModelKind::LogisticBinary => {
            let d = spec.input_dim;
            let z = dot(&params[..d], x) + params[d];
            let y = example.label as f64;
            let dz = sigmoid(z) - y;
            for (g, xi) in grad[..d].iter_mut().zip(x) {
                *g = dz * xi;
            }
            grad[d] = dz;
            if example.label == 1 {
                softplus(-z)
            } else {
                softplus(z)
            }
        }
        _ => {
            let dims = spec.layer_dims();
            let pre = forward(&dims, params, x);
            let scores = pre.last().expect("at least one layer");
            let (lse, probs) = log_softmax_parts(scores);
            let value = lse - scores[example.label];

            let mut delta = probs;
            delta[example.label] -= 1.0;

            let mut offsets = Vec::with_capacity(dims.len() - 1);
            let mut offset = 0;
            for w in dims.windows(2) {
                offsets.push(offset);
                offset += w[0] * w[1] + w[1];
            }
            for l in (0..dims.len() - 1).rev() {
                let (n_in, n_out) = (dims[l], dims[l + 1]);
                let base = offsets[l];
                let input: Vec<f64> = if l == 0 {
                    x.clone()
                } else {
                    pre[l - 1].iter().map(|v| v.max(0.0)).collect()
                };
                for o in 0..n_out {
                    let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(&input) {
                        *g = delta[o] * a;
                    }
                    grad[base + n_in * n_out + o] = delta[o];
                }
                if l > 0 {
                    let weights = &params[base..base + n_in * n_out];
                    let mut prev = vec![0.0; n_in];
                    for o in 0..n_out {
                        let row = &weights[o * n_in..(o + 1) * n_in];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * delta[o];
                        }
                    }
                    for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
            value
        }
    };
    Ok(LossSample::new(value, ParamVector::new(grad)))
}
