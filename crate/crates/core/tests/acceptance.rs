//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use fedtilt::baselines::Reduction;
use fedtilt::cli::{execute, ExperimentConfig, Method, OutlierChoice};
use fedtilt::metrics::FairnessReport;
use fedtilt::verify::{
    check_bounds, check_continuity, check_extreme_limits, check_stability_and_normalization, gradient_cases,
    gradient_check, local_linear_convergence, quadratic_convergence, reduction_check,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn final_report(cfg: &ExperimentConfig) -> Result<FairnessReport, String> {
    let out = execute(cfg).map_err(|e| e.to_string())?;
    out.records
        .last()
        .map(|r| r.report.clone())
        .ok_or_else(|| "no rounds".to_string())
}

fn gradients() -> Outcome {
    let mut lines = Vec::new();
    for (i, (name, tol, case)) in gradient_cases().into_iter().enumerate() {
        let detail = gradient_check(case, 100, tol, 1000 + i as u64).map_err(|e| format!("{name}: {e}"))?;
        lines.push(format!("{name} {detail}"));
    }
    Ok(format!("{} gradient families x 100 instances", lines.len()))
}

fn tilt_limits() -> Outcome {
    check_bounds(1000, 1)?;
    check_continuity(1000, 2)?;
    check_extreme_limits(1000, 3)?;
    check_stability_and_normalization(1000, 4)?;
    Ok("bounds, continuity, +-1e3 limits, stability on 1000 instances each".into())
}

fn reductions() -> Outcome {
    let mut n_checks = 0;
    for clients in 2..=4 {
        for r in [Reduction::FedAvg, Reduction::FedProx, Reduction::Ditto] {
            reduction_check(r, clients, 70 + clients as u64).map_err(|e| format!("{r:?}, {clients} clients: {e}"))?;
            n_checks += 1;
        }
    }
    Ok(format!("{n_checks} instances, deviation < 1e-10 over 6 rounds"))
}

fn toy_fairness() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut worst_acc: f64 = 100.0;
    for seed in SEEDS {
        let cfg = ExperimentConfig {
            seed,
            ..ExperimentConfig::toy(1).map_err(|e| e.to_string())?
        };
        let r = final_report(&cfg)?;
        let (a, b) = (r.per_client_acc[0], r.per_client_acc[1]);
        worst_gap = worst_gap.max((a - b).abs());
        worst_acc = worst_acc.min(a.min(b));
        if a < 90.0 || b < 90.0 || (a - b).abs() > 5.0 {
            return Err(format!("seed {seed}: accuracies {a:.1} / {b:.1}"));
        }
    }
    Ok(format!("min accuracy {worst_acc:.1}%, max gap {worst_gap:.1} points"))
}

fn toy_robustness() -> Outcome {
    let mut detail = Vec::new();
    for seed in SEEDS {
        let acc = |lambda: f64| -> Result<f64, String> {
            let cfg = ExperimentConfig {
                seed,
                lambda,
                ..ExperimentConfig::toy(3).map_err(|e| e.to_string())?
            };
            Ok(final_report(&cfg)?.mean_test_acc_personalized)
        };
        let (neg, pos) = (acc(-100.0)?, acc(100.0)?);
        detail.push(format!("{neg:.1}/{pos:.1}"));
        if neg < pos {
            return Err(format!("seed {seed}: lambda=-100 {neg:.2} < lambda=+100 {pos:.2}"));
        }
    }
    Ok(format!("acc(-100)/acc(+100) per seed: {}", detail.join(" ")))
}

fn convergence() -> Outcome {
    let local = local_linear_convergence()?;
    let quad = quadratic_convergence()?;
    Ok(format!("local: {local}; quadratic: {quad}"))
}

/// Scaled-down image-like setting: 20 clients, 10 classes, 2 classes per client.
fn trend_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        participation: 0.5,
        hidden: vec![32],
        synthetic_noise: 1.0,
        ..ExperimentConfig::default()
    }
}

fn fairness_trend() -> Outcome {
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let tilted = ExperimentConfig {
            method: Method::Fedtilt,
            q: 0.0,
            tau: 50.0,
            lambda: 100.0,
            ..trend_config(seed)
        };
        let avg = ExperimentConfig {
            method: Method::Fedavg,
            ..trend_config(seed)
        };
        let (st, sa) = (
            final_report(&tilted)?.client_fairness_sigma,
            final_report(&avg)?.client_fairness_sigma,
        );
        wins += usize::from(st <= sa);
        detail.push(format!("{st:.2}/{sa:.2}"));
    }
    let msg = format!("{wins}/5 seeds, sigma fedtilt/fedavg: {}", detail.join(" "));
    if wins >= 4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn corruption_trend() -> Outcome {
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let clean = ExperimentConfig {
            lambda: -10.0,
            ..trend_config(seed)
        };
        let corrupted = ExperimentConfig {
            outliers: OutlierChoice::Pixel,
            outlier_pixel_fraction: 0.3,
            outlier_sample_fraction: 0.3,
            outlier_persistent: true,
            ..clean.clone()
        };
        let a = final_report(&clean)?.mean_test_acc_personalized;
        let b = final_report(&corrupted)?.mean_test_acc_personalized;
        wins += usize::from(a - b < 5.0);
        detail.push(format!("{a:.2}/{b:.2}"));
    }
    let msg = format!("{wins}/5 seeds, clean/corrupted accuracy: {}", detail.join(" "));
    if wins >= 4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let invocations: [&[&str]; 3] = [
        &["toy", "3", "--seed", "9", "--set", "rounds=8"],
        &[
            "run",
            "--seed",
            "2",
            "--set",
            "rounds=3",
            "--set",
            "hidden=[8]",
            "--set",
            "outliers=\"pixel\"",
        ],
        &[
            "sweep",
            "--toy",
            "2",
            "--lambda-grid",
            "-10,10",
            "--tau-grid",
            "0,5",
            "--set",
            "rounds=3",
        ],
    ];
    for (i, args) in invocations.iter().enumerate() {
        let mut outputs = Vec::new();
        for (rep, threads) in ["1", "3"].iter().enumerate() {
            let out = dir.path().join(format!("{i}_{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_fedtilt"))
                .args(*args)
                .arg("--out")
                .arg(&out)
                .env("FEDTILT_THREADS", threads)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{args:?} exited with {status}"));
            }
            let file = if args[0] == "sweep" {
                out.join("cells").join("lambda_-10_tau_5").join("rounds.csv")
            } else {
                out.join("rounds.csv")
            };
            outputs.push(std::fs::read(file).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{args:?}: rounds.csv differs between repeats"));
        }
    }
    Ok("run, toy and sweep outputs byte-identical across repeats and thread counts".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient oracle suite", Duration::from_secs(30), gradients),
        ("tilt-limit suite", Duration::from_secs(5), tilt_limits),
        ("special-case reductions", Duration::from_secs(10), reductions),
        (
            "toy experiment 1 client fairness",
            Duration::from_secs(30),
            toy_fairness,
        ),
        ("toy experiment 3 robustness", Duration::from_secs(60), toy_robustness),
        ("linear convergence", Duration::from_secs(20), convergence),
        ("fairness trend vs FedAvg", Duration::from_secs(300), fairness_trend),
        (
            "persistent-corruption trend",
            Duration::from_secs(300),
            corruption_trend,
        ),
        ("determinism", Duration::from_secs(60), determinism),
    ];
    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= *limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.1?}, limit {limit:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("criterion {} {status} {name} ({:.1?}): {detail}", i + 1, elapsed);
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
