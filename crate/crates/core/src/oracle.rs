//! Independent checks: central finite differences, direct tilted-loss
//! evaluation, geometric-rate fitting and a sampled PL-inequality test.

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Central-difference gradient `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn finite_diff_grad(f: impl Fn(&ParamVector) -> f64, x: &ParamVector, step: f64) -> Result<ParamVector> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!("step must be positive, got {step}")));
    }
    let mut probe = x.clone();
    let mut grad = ParamVector::zeros(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        for value in [up, down] {
            if !value.is_finite() {
                return Err(Error::NonFiniteValue { coordinate: i, value });
            }
        }
        grad[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, floor)`.
///
/// The floor keeps near-zero gradients from turning finite-difference
/// round-off into a large relative error.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(floor)
}

/// Tilted aggregate evaluated straight from its definition with compensated
/// summation and no max-shift. Only meaningful while `|t·l|` stays below ~700.
pub fn direct_tilted_aggregate(losses: &[f64], weights: &[f64], t: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (l, w) in losses.iter().zip(weights) {
        let term = w / total * (t * l).exp();
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    sum.ln() / t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `exp(slope)` of the least-squares line through `log gap_t`.
    pub rate: f64,
    pub r_squared: f64,
}

/// Fits `log gap_t ≈ a + t·log(rate)` by least squares.
pub fn fit_linear_rate(gaps: &[f64]) -> Result<RateFit> {
    const MIN_LEN: usize = 10;
    if gaps.len() < MIN_LEN {
        return Err(Error::TooFewGaps {
            needed: MIN_LEN,
            actual: gaps.len(),
        });
    }
    if let Some((index, &value)) = gaps.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::NonPositiveGap { index, value });
    }
    let n = gaps.len() as f64;
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in ys.iter().enumerate() {
        let dx = t as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (t, y) in ys.iter().enumerate() {
        let fit = intercept + slope * t as f64;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot <= f64::EPSILON * n * mean_y.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateFit {
        rate: slope.exp(),
        r_squared,
    })
}

/// True iff `½‖∇f(x)‖² ≥ μ·(f(x) − f*)` holds at every point, up to `1e-9` slack.
pub fn pl_gap_check(
    f: impl Fn(&ParamVector) -> f64,
    grad_f: impl Fn(&ParamVector) -> ParamVector,
    minimum_value: f64,
    points: &[ParamVector],
    mu: f64,
) -> bool {
    const SLACK: f64 = 1e-9;
    points.iter().all(|x| {
        let g = grad_f(x);
        0.5 * g.norm_sq() + SLACK >= mu * (f(x) - minimum_value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let x = ParamVector::new(vec![1.0, -2.0, 0.5]);
        let g = finite_diff_grad(|p| 0.5 * p.norm_sq(), &x, 1e-5).unwrap();
        assert!(g.max_abs_diff(&x) < 1e-8);
        let c = finite_diff_grad(|_| 3.0, &x, 1e-5).unwrap();
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn finite_diff_rejects_bad_input() {
        let x = ParamVector::new(vec![1.0]);
        assert!(finite_diff_grad(|p| p[0], &x, 0.0).is_err());
        assert!(matches!(
            finite_diff_grad(|p| if p[0] > 1.0 { f64::NAN } else { 0.0 }, &x, 1e-3),
            Err(Error::NonFiniteValue { coordinate: 0, .. })
        ));
    }

    #[test]
    fn geometric_sequence_rate() {
        let gaps: Vec<f64> = (0..20).map(|t| 0.5f64.powi(t)).collect();
        let fit = fit_linear_rate(&gaps).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let flat = fit_linear_rate(&[2.0; 12]).unwrap();
        assert!((flat.rate - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rate_fit_errors() {
        assert!(matches!(fit_linear_rate(&[1.0; 5]), Err(Error::TooFewGaps { .. })));
        let mut gaps = vec![1.0; 12];
        gaps[4] = 0.0;
        assert!(matches!(
            fit_linear_rate(&gaps),
            Err(Error::NonPositiveGap { index: 4, .. })
        ));
    }

    #[test]
    fn pl_inequality() {
        let mu = 0.7;
        let pts: Vec<ParamVector> = (0..5).map(|i| ParamVector::new(vec![i as f64, -1.0])).collect();
        assert!(pl_gap_check(
            |x| 0.5 * mu * x.norm_sq(),
            |x| {
                let mut g = x.clone();
                g.scale(mu);
                g
            },
            0.0,
            &pts,
            mu
        ));
        // Flat shelf at height 1 for |x| > 1: zero gradient but positive gap.
        let shelf = |x: &ParamVector| if x[0].abs() > 1.0 { 1.0 } else { x[0] * x[0] };
        let shelf_grad = |x: &ParamVector| ParamVector::new(vec![if x[0].abs() > 1.0 { 0.0 } else { 2.0 * x[0] }]);
        assert!(!pl_gap_check(
            shelf,
            shelf_grad,
            0.0,
            &[ParamVector::new(vec![3.0])],
            0.1
        ));
    }

    #[test]
    fn direct_evaluation_matches_closed_form() {
        let v = direct_tilted_aggregate(&[1.0, 3.0], &[1.0, 1.0], 1.0);
        assert!((v - 2.433_780_830_483_027).abs() < 1e-14);
    }
}
