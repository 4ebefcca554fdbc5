//! Tilted losses and their exact gradients.
//!
//! Every tilted quantity here has the form `(1/t)·log Σ_i w̄_i·exp(t·l_i)`
//! with normalized weights `w̄`. Gradients follow from the chain rule: the
//! derivative with respect to `l_i` is the softmax-style coefficient
//! `c_i = w̄_i·exp(t·l_i) / Σ_j w̄_j·exp(t·l_j)`, so any tilted loss over
//! differentiable inner losses has gradient `Σ_i c_i·∇l_i`.
//!
//! All exponentials are max-shifted; tilts of magnitude `1e4` times the loss
//! scale evaluate without overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Tilt magnitudes below this are treated as exactly zero (the average-loss limit).
pub const ZERO_TILT_EPS: f64 = 1e-9;

/// Distance between a client model and the global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    SquaredEuclidean,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::SquaredEuclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }

    /// Gradient of `eval(a, b)` with respect to `b`, accumulated as `out += scale·∇_b`.
    fn accumulate_grad_wrt_second(self, a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Distance::SquaredEuclidean => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o += scale * 2.0 * (y - x);
                }
            }
        }
    }
}

/// The four tilt hyperparameters plus the distance used by the global objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltConfig {
    /// Global tilt over client-model distances.
    pub q: f64,
    /// Client-level tilt over class losses.
    pub tau: f64,
    /// Class-level tilt over per-example losses.
    pub lambda: f64,
    /// Proximal weight tying personalized models to the global model.
    pub mu: f64,
    #[serde(default)]
    pub dist: Distance,
}

impl Default for TiltConfig {
    fn default() -> Self {
        Self {
            q: 0.0,
            tau: 0.0,
            lambda: 0.0,
            mu: 0.01,
            dist: Distance::SquaredEuclidean,
        }
    }
}

impl TiltConfig {
    pub fn validate(&self) -> Result<()> {
        for t in [self.q, self.tau, self.lambda] {
            if !t.is_finite() {
                return Err(Error::NonFiniteTilt(t));
            }
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mu must be finite and non-negative, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// A loss value together with its gradient with respect to the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    pub value: f64,
    pub gradient: ParamVector,
}

impl LossSample {
    pub fn new(value: f64, gradient: ParamVector) -> Self {
        Self { value, gradient }
    }
}

/// One class's contribution to a client's two-level tilted loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTilt {
    /// Number of examples of this class.
    pub size: usize,
    pub value: f64,
    pub gradient: ParamVector,
}

fn check_inputs(losses: &[f64], weights: &[f64], t: f64) -> Result<()> {
    if losses.is_empty() {
        return Err(Error::EmptyLossSet);
    }
    if weights.len() != losses.len() {
        return Err(Error::LengthMismatch {
            expected: losses.len(),
            actual: weights.len(),
        });
    }
    if let Some((index, &weight)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidWeight { index, weight });
    }
    if !t.is_finite() {
        return Err(Error::NonFiniteTilt(t));
    }
    Ok(())
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Weighted tilted aggregate `(1/t)·log Σ w̄_i·exp(t·l_i)`.
///
/// Returns the weighted mean when `|t| < ZERO_TILT_EPS`. The result is
/// clamped to `[min l, max l]`, which the exact value always satisfies.
pub fn tilted_aggregate(losses: &[f64], weights: &[f64], t: f64) -> Result<f64> {
    check_inputs(losses, weights, t)?;
    let wbar = normalized(weights);
    let (lo, hi) = min_max(losses);
    if t.abs() < ZERO_TILT_EPS {
        let mean: f64 = wbar.iter().zip(losses).map(|(w, l)| w * l).sum();
        return Ok(mean.clamp(lo, hi));
    }
    let shift = losses.iter().map(|l| t * l).fold(f64::NEG_INFINITY, f64::max);
    // log Σ w̄ e^{x} with Σ w̄ = 1 equals log1p(Σ w̄ (e^{x} − 1)), which keeps
    // full precision when every shifted exponent is tiny.
    let excess: f64 = wbar.iter().zip(losses).map(|(w, l)| w * (t * l - shift).exp_m1()).sum();
    let value = (shift + excess.ln_1p()) / t;
    Ok(value.clamp(lo, hi))
}

/// Coefficients `c_i = ∂ tilted_aggregate / ∂ l_i`; non-negative and summing to one.
pub fn tilted_gradient_weights(losses: &[f64], weights: &[f64], t: f64) -> Result<Vec<f64>> {
    check_inputs(losses, weights, t)?;
    let wbar = normalized(weights);
    if t.abs() < ZERO_TILT_EPS {
        return Ok(wbar);
    }
    let shift = losses.iter().map(|l| t * l).fold(f64::NEG_INFINITY, f64::max);
    let mut coeffs: Vec<f64> = wbar
        .iter()
        .zip(losses)
        .map(|(w, l)| w * (t * l - shift).exp())
        .collect();
    let total: f64 = coeffs.iter().sum();
    for c in &mut coeffs {
        *c /= total;
    }
    Ok(coeffs)
}

fn combine_gradients<'a>(
    coeffs: &[f64],
    gradients: impl Iterator<Item = &'a ParamVector>,
    len: usize,
) -> Result<ParamVector> {
    let mut out = ParamVector::zeros(len);
    for (c, g) in coeffs.iter().zip(gradients) {
        if g.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: g.len(),
            });
        }
        out.axpy(*c, g);
    }
    Ok(out)
}

/// Class-level tilt: uniform-weight `λ`-tilt over the per-example losses of one class.
pub fn class_tilted_loss(class_losses: &[LossSample], lambda: f64) -> Result<LossSample> {
    let first = class_losses.first().ok_or(Error::EmptyClassShard)?;
    let values: Vec<f64> = class_losses.iter().map(|s| s.value).collect();
    let weights = vec![1.0; values.len()];
    let value = tilted_aggregate(&values, &weights, lambda)?;
    let coeffs = tilted_gradient_weights(&values, &weights, lambda)?;
    let gradient = combine_gradients(&coeffs, class_losses.iter().map(|s| &s.gradient), first.gradient.len())?;
    Ok(LossSample { value, gradient })
}

/// Client-level tilt: `τ`-tilt over class losses weighted by class sizes.
pub fn client_tilted_loss(per_class: &[ClassTilt], tau: f64) -> Result<LossSample> {
    let first = per_class.first().ok_or(Error::EmptyLossSet)?;
    let values: Vec<f64> = per_class.iter().map(|c| c.value).collect();
    let weights: Vec<f64> = per_class.iter().map(|c| c.size as f64).collect();
    let value = tilted_aggregate(&values, &weights, tau)?;
    let coeffs = tilted_gradient_weights(&values, &weights, tau)?;
    let gradient = combine_gradients(&coeffs, per_class.iter().map(|c| &c.gradient), first.gradient.len())?;
    Ok(LossSample { value, gradient })
}

/// Local objective: client tilted loss plus `(μ/2)‖v − w‖²`.
pub fn local_objective(v: &ParamVector, w: &ParamVector, client_tilt: &LossSample, mu: f64) -> Result<LossSample> {
    if v.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            actual: w.len(),
        });
    }
    if client_tilt.gradient.len() != v.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            actual: client_tilt.gradient.len(),
        });
    }
    let mut gradient = client_tilt.gradient.clone();
    let mut dist_sq = 0.0;
    for ((g, a), b) in gradient.iter_mut().zip(v.iter()).zip(w.iter()) {
        let d = a - b;
        dist_sq += d * d;
        *g += mu * d;
    }
    Ok(LossSample {
        value: client_tilt.value + 0.5 * mu * dist_sq,
        gradient,
    })
}

/// Global tilted loss over client-model distances to `w`, with its gradient in `w`.
pub fn global_tilted_loss(
    client_models: &[ParamVector],
    w: &ParamVector,
    q: f64,
    dist: Distance,
) -> Result<LossSample> {
    if client_models.is_empty() {
        return Err(Error::EmptyModelSet);
    }
    if let Some(bad) = client_models.iter().find(|m| m.len() != w.len()) {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            actual: bad.len(),
        });
    }
    let distances: Vec<f64> = client_models.iter().map(|m| dist.eval(m, w)).collect();
    let weights = vec![1.0; distances.len()];
    let value = tilted_aggregate(&distances, &weights, q)?;
    let coeffs = tilted_gradient_weights(&distances, &weights, q)?;
    let mut gradient = ParamVector::zeros(w.len());
    for (c, m) in coeffs.iter().zip(client_models) {
        dist.accumulate_grad_wrt_second(m, w, *c, &mut gradient);
    }
    Ok(LossSample { value, gradient })
}
