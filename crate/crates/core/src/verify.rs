//! Verification suite: gradient checks against finite differences, tilt
//! limits, special-case reductions, convergence rates and the PL inequality.
//!
//! Each check is a named closure returning a one-line detail on success or
//! the failure reason. The CLI `verify` command runs [`standard_suite`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{check_reduction, Reduction};
use crate::data::{gen_toy, ClientData, Example, FederatedDataset};
use crate::models::{init_params, loss, loss_and_grad, ModelSpec};
use crate::oracle::{direct_tilted_aggregate, finite_diff_grad, fit_linear_rate, pl_gap_check, relative_error};
use crate::params::ParamVector;
use crate::protocol::{two_level_tilted_loss, RunConfig};
use crate::tilt::{
    class_tilted_loss, global_tilted_loss, local_objective, tilted_aggregate, tilted_gradient_weights, Distance,
    LossSample, TiltConfig,
};

/// Central-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-6;
/// Gradient-norm floor in the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-3;
/// Relative-error tolerance for smooth objectives.
pub const GRAD_TOL: f64 = 1e-5;
/// Relative-error tolerance through ReLU layers.
pub const RELU_GRAD_TOL: f64 = 1e-4;
/// Maximum deviation allowed between a special case and its baseline.
pub const REDUCTION_TOL: f64 = 1e-10;

pub type CheckResult = std::result::Result<String, String>;

pub struct Check {
    pub category: &'static str,
    pub name: String,
    pub run: Box<dyn Fn() -> CheckResult + Send + Sync>,
}

impl Check {
    pub fn new(
        category: &'static str,
        name: impl Into<String>,
        run: impl Fn() -> CheckResult + Send + Sync + 'static,
    ) -> Self {
        Self {
            category,
            name: name.into(),
            run: Box::new(run),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub category: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub fn run_checks(checks: &[Check]) -> Vec<CheckOutcome> {
    checks
        .iter()
        .map(|c| {
            let (passed, detail) = match (c.run)() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckOutcome {
                category: c.category,
                name: c.name.clone(),
                passed,
                detail,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random instances

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> ParamVector {
    ParamVector::new((0..len).map(|_| uniform(rng, -scale, scale)).collect())
}

fn random_examples(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let features = (0..dim).map(|_| uniform(rng, -2.0, 2.0)).collect();
            // Cycle labels so every class is present whenever n >= classes.
            Example::new(features, i % classes)
        })
        .collect()
}

/// Gradient-check outcome for one random instance: relative error between
/// the analytic gradient and central differences.
pub type GradientCase = fn(&mut ChaCha8Rng) -> crate::Result<f64>;

fn fd_error(f: impl Fn(&ParamVector) -> f64, x: &ParamVector, analytic: &[f64]) -> crate::Result<f64> {
    let numeric = finite_diff_grad(f, x, FD_STEP)?;
    Ok(relative_error(analytic, &numeric, REL_ERR_FLOOR))
}

/// Coefficients of the tilted aggregate against differences in the losses.
pub fn case_tilt_weights(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let losses = random_vec(rng, 5, 3.0);
    let weights: Vec<f64> = (0..5).map(|_| uniform(rng, 0.1, 1.0)).collect();
    let t = uniform(rng, -3.0, 3.0);
    let coeffs = tilted_gradient_weights(&losses, &weights, t)?;
    fd_error(|l| direct_tilted_aggregate(l, &weights, t), &losses, &coeffs)
}

/// Class-level tilt over logistic losses.
pub fn case_class_tilt(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let spec = ModelSpec::logistic_binary(3);
    let params = random_vec(rng, spec.param_count(), 1.0);
    let examples: Vec<Example> = random_examples(rng, 4, 3, 2)
        .into_iter()
        .map(|mut e| {
            e.label = usize::from(rng.random::<bool>());
            e
        })
        .collect();
    let lambda = uniform(rng, -3.0, 3.0);
    let samples = examples
        .iter()
        .map(|e| loss_and_grad(&spec, &params, e))
        .collect::<crate::Result<Vec<_>>>()?;
    let analytic = class_tilted_loss(&samples, lambda)?;
    let f = |p: &ParamVector| {
        let losses: Vec<f64> = examples.iter().map(|e| loss(&spec, p, e).unwrap_or(f64::NAN)).collect();
        direct_tilted_aggregate(&losses, &vec![1.0; losses.len()], lambda)
    };
    fd_error(f, &params, &analytic.gradient)
}

/// Direct nested evaluation of the two-level tilted loss.
fn direct_two_level(spec: &ModelSpec, params: &[f64], examples: &[Example], tau: f64, lambda: f64) -> f64 {
    let mut values = Vec::new();
    let mut sizes = Vec::new();
    for k in 0..spec.num_classes {
        let losses: Vec<f64> = examples
            .iter()
            .filter(|e| e.label == k)
            .map(|e| loss(spec, params, e).unwrap_or(f64::NAN))
            .collect();
        if losses.is_empty() {
            continue;
        }
        let inner = if lambda.abs() < 1e-9 {
            losses.iter().sum::<f64>() / losses.len() as f64
        } else {
            direct_tilted_aggregate(&losses, &vec![1.0; losses.len()], lambda)
        };
        values.push(inner);
        sizes.push(losses.len() as f64);
    }
    if tau.abs() < 1e-9 {
        values.iter().zip(&sizes).map(|(v, s)| v * s).sum::<f64>() / sizes.iter().sum::<f64>()
    } else {
        direct_tilted_aggregate(&values, &sizes, tau)
    }
}

/// Two-level (class, client) tilt over softmax losses with unequal class sizes.
pub fn case_two_level_tilt(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let spec = ModelSpec::softmax_linear(3, 3);
    let params = random_vec(rng, spec.param_count(), 1.0);
    let n = 5 + rng.random_range(0..4);
    let examples = random_examples(rng, n, 3, 3);
    let tau = uniform(rng, -3.0, 3.0);
    let lambda = uniform(rng, -3.0, 3.0);
    let analytic = two_level_tilted_loss(&spec, &params, examples.iter(), tau, lambda)?;
    fd_error(
        |p| direct_two_level(&spec, p, &examples, tau, lambda),
        &params,
        &analytic.gradient,
    )
}

/// Local objective (two-level tilt plus proximal term) in the personalized model.
pub fn case_local_objective(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let spec = ModelSpec::logistic_binary(2);
    let v = random_vec(rng, 3, 1.0);
    let w = random_vec(rng, 3, 1.0);
    let examples = random_examples(rng, 6, 2, 2);
    let tau = uniform(rng, -2.0, 2.0);
    let lambda = uniform(rng, -2.0, 2.0);
    let mu = uniform(rng, 0.0, 1.0);
    let tilt = two_level_tilted_loss(&spec, &v, examples.iter(), tau, lambda)?;
    let analytic = local_objective(&v, &w, &tilt, mu)?;
    let f = |p: &ParamVector| direct_two_level(&spec, p, &examples, tau, lambda) + 0.5 * mu * p.squared_distance(&w);
    fd_error(f, &v, &analytic.gradient)
}

/// Global tilted loss in the global model.
pub fn case_global_loss(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let models: Vec<ParamVector> = (0..3).map(|_| random_vec(rng, 4, 1.0)).collect();
    let w = random_vec(rng, 4, 1.0);
    let q = uniform(rng, -2.0, 2.0);
    let analytic = global_tilted_loss(&models, &w, q, Distance::SquaredEuclidean)?;
    let f = |p: &ParamVector| {
        let d: Vec<f64> = models.iter().map(|m| m.squared_distance(p)).collect();
        direct_tilted_aggregate(&d, &[1.0; 3], q)
    };
    fd_error(f, &w, &analytic.gradient)
}

fn model_case(rng: &mut ChaCha8Rng, spec: &ModelSpec, params: ParamVector) -> crate::Result<f64> {
    let ex = &random_examples(rng, 1, spec.input_dim, 1)[0];
    let ex = Example::new(ex.features.clone(), rng.random_range(0..spec.num_classes));
    let analytic = loss_and_grad(spec, &params, &ex)?;
    fd_error(|p| loss(spec, p, &ex).unwrap_or(f64::NAN), &params, &analytic.gradient)
}

pub fn case_model_logistic(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let spec = ModelSpec::logistic_binary(4);
    let p = random_vec(rng, spec.param_count(), 1.0);
    model_case(rng, &spec, p)
}

pub fn case_model_softmax(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let spec = ModelSpec::softmax_linear(4, 3);
    let p = random_vec(rng, spec.param_count(), 1.0);
    model_case(rng, &spec, p)
}

pub fn case_model_mlp(rng: &mut ChaCha8Rng) -> crate::Result<f64> {
    let spec = ModelSpec::mlp(4, vec![6, 5], 3);
    let mut p = init_params(&spec, rng.random());
    // Non-zero biases move pre-activations off the ReLU kink at zero.
    for x in p.iter_mut() {
        if *x == 0.0 {
            *x = uniform(rng, -0.3, 0.3);
        }
    }
    model_case(rng, &spec, p)
}

/// Named gradient cases with their tolerance.
pub fn gradient_cases() -> Vec<(&'static str, f64, GradientCase)> {
    vec![
        ("tilt-coefficients", GRAD_TOL, case_tilt_weights as GradientCase),
        ("class-tilt", GRAD_TOL, case_class_tilt),
        ("two-level-tilt", GRAD_TOL, case_two_level_tilt),
        ("local-objective", GRAD_TOL, case_local_objective),
        ("global-tilted-loss", GRAD_TOL, case_global_loss),
        ("logistic-loss", GRAD_TOL, case_model_logistic),
        ("softmax-loss", GRAD_TOL, case_model_softmax),
        ("mlp-loss", RELU_GRAD_TOL, case_model_mlp),
    ]
}

/// Runs one gradient case on `instances` random instances; fails on the first
/// instance above tolerance.
pub fn gradient_check(case: GradientCase, instances: usize, tolerance: f64, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let err = case(&mut rng).map_err(|e| format!("instance {i}: {e}"))?;
        if err.is_nan() || err >= tolerance {
            return Err(format!("instance {i}: relative error {err:.3e} >= {tolerance:.0e}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("{instances} instances, max rel. err {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// Tilt limits

/// Tilts exercised by the bounds check.
pub const BOUND_TILTS: [f64; 5] = [-100.0, -1.0, 0.0, 1.0, 100.0];

fn random_loss_set(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..=10);
    let losses = (0..n).map(|_| uniform(rng, 0.0, 5.0)).collect();
    let weights = (0..n).map(|_| uniform(rng, 0.1, 1.0)).collect();
    (losses, weights)
}

/// `min ≤ tilted ≤ max` on random instances over [`BOUND_TILTS`].
pub fn check_bounds(instances: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let (losses, weights) = random_loss_set(&mut rng);
        let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for t in BOUND_TILTS {
            let v = tilted_aggregate(&losses, &weights, t).map_err(|e| e.to_string())?;
            if !(lo <= v && v <= hi) {
                return Err(format!("instance {i}, t={t}: {v} outside [{lo}, {hi}]"));
            }
        }
    }
    Ok(format!("{instances} instances x {} tilts", BOUND_TILTS.len()))
}

/// `|tilted(±1e-10) − tilted(0)| < 1e-6`.
pub fn check_continuity(instances: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let (losses, weights) = random_loss_set(&mut rng);
        let at_zero = tilted_aggregate(&losses, &weights, 0.0).map_err(|e| e.to_string())?;
        for t in [-1e-10, 1e-10] {
            let v = tilted_aggregate(&losses, &weights, t).map_err(|e| e.to_string())?;
            let gap = (v - at_zero).abs();
            if gap >= 1e-6 {
                return Err(format!("instance {i}, t={t}: gap {gap:.3e}"));
            }
            worst = worst.max(gap);
        }
        // Just above the switch-over threshold the general formula must agree too.
        let v = tilted_aggregate(&losses, &weights, 2e-9).map_err(|e| e.to_string())?;
        if (v - at_zero).abs() >= 1e-6 {
            return Err(format!("instance {i}, t=2e-9: gap {:.3e}", (v - at_zero).abs()));
        }
    }
    Ok(format!("{instances} instances, max gap {worst:.2e}"))
}

/// `|tilted(±1e3) − max/min| < 1e-2` on instances whose loss gap is at least 0.1.
pub fn check_extreme_limits(instances: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tested = 0;
    while tested < instances {
        let (losses, weights) = random_loss_set(&mut rng);
        let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 0.1 {
            continue;
        }
        tested += 1;
        let up = tilted_aggregate(&losses, &weights, 1e3).map_err(|e| e.to_string())?;
        let down = tilted_aggregate(&losses, &weights, -1e3).map_err(|e| e.to_string())?;
        if (up - hi).abs() >= 1e-2 || (down - lo).abs() >= 1e-2 {
            return Err(format!("limits {down}/{up} vs {lo}/{hi}"));
        }
    }
    Ok(format!("{instances} instances"))
}

/// Finite results for `|t|·max|loss|` up to `1e4`, and coefficients summing to one within `1e-12`.
pub fn check_stability_and_normalization(instances: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let (losses, weights) = random_loss_set(&mut rng);
        let scale = losses.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1e-12);
        for t in [-1e4 / scale, -100.0, -1.7, 0.0, 1e-10, 0.5, 100.0, 1e4 / scale] {
            let v = tilted_aggregate(&losses, &weights, t).map_err(|e| e.to_string())?;
            let c = tilted_gradient_weights(&losses, &weights, t).map_err(|e| e.to_string())?;
            let sum: f64 = c.iter().sum();
            if !v.is_finite() || c.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(format!("instance {i}, t={t}: non-finite output"));
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(format!("instance {i}, t={t}: coefficients sum to {sum}"));
            }
        }
    }
    Ok(format!("{instances} instances"))
}

/// Central-difference error shrinks by ~4x when the step halves.
pub fn check_fd_order() -> CheckResult {
    let f = |x: &ParamVector| x.iter().map(|v| v.sin() * v.exp()).sum::<f64>();
    let x = ParamVector::new(vec![0.3, -0.7, 1.1]);
    let exact: Vec<f64> = x.iter().map(|v| v.exp() * (v.sin() + v.cos())).collect();
    let err = |h: f64| {
        let g = finite_diff_grad(f, &x, h).expect("finite");
        relative_error(&g, &exact, 1e-12)
    };
    let (coarse, fine) = (err(1e-2), err(5e-3));
    let ratio = coarse / fine;
    if (3.5..4.5).contains(&ratio) {
        Ok(format!("error ratio {ratio:.3} on step halving"))
    } else {
        Err(format!("error ratio {ratio:.3}, expected ~4"))
    }
}

// ---------------------------------------------------------------------------
// Reductions

/// Full-batch instance on which tilted special cases and baselines are exactly comparable.
pub fn reduction_instance(num_clients: usize, seed: u64) -> (FederatedDataset, ModelSpec, RunConfig) {
    let toy = gen_toy(1, seed).expect("valid experiment");
    let mut clients: Vec<ClientData> = toy.clients.clone();
    // Extra clients reuse the toy shards with shifted features.
    let mut k = 0;
    while clients.len() < num_clients {
        let shift = 0.25 * (k + 1) as f64;
        let src = &toy.clients[k % 2];
        let moved = |v: &[Example]| {
            v.iter()
                .map(|e| Example::new(e.features.iter().map(|x| x + shift).collect(), e.label))
                .collect()
        };
        clients.push(ClientData {
            train: moved(&src.train),
            test: moved(&src.test),
        });
        k += 1;
    }
    clients.truncate(num_clients);
    let dataset = FederatedDataset {
        clients,
        num_classes: 2,
        input_dim: 2,
    };
    let cfg = RunConfig {
        num_clients,
        participation: 1.0,
        batch_size: 1000,
        global_rounds: 6,
        client_epochs: 3,
        server_epochs: 1,
        lr_intermediate: 0.3,
        lr_personal: 0.3,
        lr_server: 0.1,
        tilt: TiltConfig {
            mu: 0.5,
            ..TiltConfig::default()
        },
        seed,
        ..RunConfig::default()
    };
    (dataset, ModelSpec::logistic_binary(2), cfg)
}

pub fn reduction_check(reduction: Reduction, num_clients: usize, seed: u64) -> CheckResult {
    let (dataset, model, cfg) = reduction_instance(num_clients, seed);
    let dev = check_reduction(reduction, &dataset, &model, &cfg).map_err(|e| e.to_string())?;
    if dev < REDUCTION_TOL {
        Ok(format!(
            "{num_clients} clients, {} rounds, max deviation {dev:.2e}",
            cfg.global_rounds
        ))
    } else {
        Err(format!("max deviation {dev:.3e} >= {REDUCTION_TOL:.0e}"))
    }
}

// ---------------------------------------------------------------------------
// Convergence

/// `L(v) = R̃(τ, λ; v) + (α/2)‖v‖² + (μ/2)‖v − w‖²` over logistic losses; the
/// ℓ2 term makes the per-example loss `(α)`-strongly convex.
pub struct RegularizedLocalObjective {
    pub model: ModelSpec,
    pub examples: Vec<Example>,
    pub tau: f64,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub anchor: ParamVector,
}

impl RegularizedLocalObjective {
    /// Toy experiment 2 client 0 with a fixed anchor.
    pub fn toy(tau: f64, lambda: f64, mu: f64, alpha: f64, seed: u64) -> Self {
        let ds = gen_toy(2, seed).expect("valid experiment");
        Self {
            model: ModelSpec::logistic_binary(2),
            examples: ds.clients[0].train.clone(),
            tau,
            lambda,
            mu,
            alpha,
            anchor: ParamVector::new(vec![0.5, -0.5, 0.2]),
        }
    }

    pub fn eval(&self, v: &ParamVector) -> LossSample {
        let tilt =
            two_level_tilted_loss(&self.model, v, self.examples.iter(), self.tau, self.lambda).expect("valid instance");
        let mut out = local_objective(v, &self.anchor, &tilt, self.mu).expect("matching lengths");
        out.value += 0.5 * self.alpha * v.norm_sq();
        out.gradient.axpy(self.alpha, v);
        out
    }

    pub fn strong_convexity(&self) -> f64 {
        self.alpha + self.mu
    }

    /// Gradient-descent iterates `v_0 = 0, v_{t+1} = v_t − η∇L(v_t)`, returning the values.
    pub fn descend(&self, step: f64, iterations: usize) -> (Vec<f64>, ParamVector) {
        let mut v = ParamVector::zeros(self.model.param_count());
        let mut values = Vec::with_capacity(iterations + 1);
        for _ in 0..iterations {
            let s = self.eval(&v);
            values.push(s.value);
            v.axpy(-step, &s.gradient);
        }
        values.push(self.eval(&v).value);
        (values, v)
    }

    /// Minimizer by long gradient descent.
    pub fn minimize(&self, step: f64) -> (ParamVector, f64) {
        let mut v = ParamVector::zeros(self.model.param_count());
        for _ in 0..200_000 {
            let s = self.eval(&v);
            if s.gradient.norm() < 1e-13 {
                break;
            }
            v.axpy(-step, &s.gradient);
        }
        let value = self.eval(&v).value;
        (v, value)
    }
}

/// Step size and iteration count for the local-objective convergence check.
pub const LOCAL_GD_STEP: f64 = 0.05;
pub const LOCAL_GD_ITERS: usize = 200;

/// Full-batch gradient descent on the regularized local objective: values
/// non-increasing and the optimality gap decays geometrically.
pub fn local_linear_convergence() -> CheckResult {
    let obj = RegularizedLocalObjective::toy(1.0, 0.5, 0.01, 0.5, 1);
    let (_, f_star) = obj.minimize(LOCAL_GD_STEP);
    let (values, _) = obj.descend(LOCAL_GD_STEP, LOCAL_GD_ITERS);
    if let Some(t) = values.windows(2).position(|w| w[1] > w[0] + 1e-15) {
        return Err(format!("objective increased at iteration {t}"));
    }
    let gaps: Vec<f64> = values[..LOCAL_GD_ITERS].iter().map(|v| v - f_star).collect();
    let fit = fit_linear_rate(&gaps).map_err(|e| e.to_string())?;
    if fit.rate < 1.0 && fit.r_squared > 0.95 {
        Ok(format!("rate {:.4}, R^2 {:.4}", fit.rate, fit.r_squared))
    } else {
        Err(format!("rate {:.4}, R^2 {:.4}", fit.rate, fit.r_squared))
    }
}

/// Gradient descent with step `1/L` on `½ Σ d_i x_i²`, `d` spanning `[μ, L]`.
/// Returns `(fitted rate, R², 1 − μ/L)`.
pub fn quadratic_rate(mu: f64, smoothness: f64, dim: usize, iterations: usize) -> crate::Result<(f64, f64, f64)> {
    let diag: Vec<f64> = (0..dim)
        .map(|i| mu + (smoothness - mu) * i as f64 / (dim - 1) as f64)
        .collect();
    let f = |x: &[f64]| 0.5 * diag.iter().zip(x).map(|(d, v)| d * v * v).sum::<f64>();
    let mut x = vec![1.0; dim];
    let mut gaps = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        gaps.push(f(&x));
        for (v, d) in x.iter_mut().zip(&diag) {
            *v -= d / smoothness * *v;
        }
    }
    let fit = fit_linear_rate(&gaps)?;
    Ok((fit.rate, fit.r_squared, 1.0 - mu / smoothness))
}

pub fn quadratic_convergence() -> CheckResult {
    let (rate, r2, bound) = quadratic_rate(0.05, 1.0, 5, 200).map_err(|e| e.to_string())?;
    if rate <= bound + 0.02 {
        Ok(format!("rate {rate:.4} <= {:.4} (R^2 {r2:.4})", bound + 0.02))
    } else {
        Err(format!("rate {rate:.4} > {:.4}", bound + 0.02))
    }
}

/// PL inequality with constant `α + μ` at random points of the regularized local objective.
pub fn pl_check(points: usize, seed: u64) -> CheckResult {
    let obj = RegularizedLocalObjective::toy(1.0, 0.5, 0.01, 0.5, 1);
    let (_, f_star) = obj.minimize(LOCAL_GD_STEP);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<ParamVector> = (0..points).map(|_| random_vec(&mut rng, 3, 3.0)).collect();
    let ok = pl_gap_check(
        |v| obj.eval(v).value,
        |v| obj.eval(v).gradient,
        f_star,
        &pts,
        obj.strong_convexity(),
    );
    if ok {
        Ok(format!("{points} points, constant {}", obj.strong_convexity()))
    } else {
        Err("PL inequality violated".into())
    }
}

/// Every check run by `fedtilt verify`.
pub fn standard_suite() -> Vec<Check> {
    let mut checks = vec![
        Check::new("tilt-limits", "bounds", || check_bounds(1000, 11)),
        Check::new("tilt-limits", "zero-tilt continuity", || check_continuity(1000, 12)),
        Check::new("tilt-limits", "extreme-tilt limits", || check_extreme_limits(1000, 13)),
        Check::new("coefficients", "stability and normalization", || {
            check_stability_and_normalization(1000, 14)
        }),
        Check::new("finite-differences", "second-order accuracy", check_fd_order),
    ];
    for (i, (name, tol, case)) in gradient_cases().into_iter().enumerate() {
        checks.push(Check::new("gradients", name, move || {
            gradient_check(case, 100, tol, 100 + i as u64)
        }));
    }
    for (name, reduction) in [
        ("fedavg", Reduction::FedAvg),
        ("fedprox", Reduction::FedProx),
        ("ditto", Reduction::Ditto),
    ] {
        checks.push(Check::new("reductions", format!("{name} (2 clients)"), move || {
            reduction_check(reduction, 2, 21)
        }));
        checks.push(Check::new("reductions", format!("{name} (4 clients)"), move || {
            reduction_check(reduction, 4, 22)
        }));
    }
    checks.push(Check::new(
        "convergence",
        "local objective linear rate",
        local_linear_convergence,
    ));
    checks.push(Check::new("convergence", "quadratic rate bound", quadratic_convergence));
    checks.push(Check::new("pl-inequality", "regularized local objective", || {
        pl_check(100, 31)
    }));
    checks
}
