//! Command-line front end: `run`, `sweep`, `toy` and `verify`.
//!
//! Configuration is layered: built-in defaults (or a toy preset), then an
//! optional flat TOML file, then `--set key=value` overrides, then the
//! dedicated flags. Exit codes: 0 success, 1 configuration or usage error,
//! 2 runtime error, 3 verification failure.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{run_baseline, BaselineKind};
use crate::data::{gen_image_like, gen_toy, load_idx, partition_noniid, FederatedDataset, OutlierKind, OutlierSpec};
use crate::metrics::RoundRecord;
use crate::models::ModelSpec;
use crate::protocol::{self, Personalization, RunConfig, RunOutput, ServerAggregation};
use crate::tilt::{Distance, TiltConfig};
use crate::verify::{run_checks, standard_suite, Check};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Header of every `rounds.csv`.
pub const ROUNDS_HEADER: [&str; 8] = [
    "round",
    "mean_acc_personalized",
    "mean_acc_global",
    "client_sigma",
    "mu_sigma",
    "sigma_sigma",
    "global_loss",
    "mean_local_loss",
];

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Toy1,
    Toy2,
    Toy3,
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fedtilt,
    Fedavg,
    Fedprox,
    Ditto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Logistic,
    Softmax,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierChoice {
    None,
    Gaussian,
    Pixel,
}

/// Flat experiment description; every key may appear in a config file or in `--set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub method: Method,
    pub model: ModelChoice,
    pub hidden: Vec<usize>,

    pub num_clients: usize,
    pub participation: f64,
    pub batch_size: usize,
    pub rounds: usize,
    pub client_epochs: usize,
    pub server_epochs: usize,
    pub lr_intermediate: f64,
    pub lr_personal: f64,
    pub lr_server: f64,
    pub q: f64,
    pub tau: f64,
    pub lambda: f64,
    pub mu: f64,
    pub seed: u64,
    pub aggregation: ServerAggregation,
    pub personalization: Personalization,

    pub classes_per_client: usize,
    pub synthetic_classes: usize,
    pub synthetic_dim: usize,
    pub synthetic_per_class: usize,
    pub synthetic_noise: f64,

    pub idx_images: String,
    pub idx_labels: String,
    /// Examples kept from the IDX files; 0 keeps all.
    pub idx_limit: usize,

    pub outliers: OutlierChoice,
    pub outlier_mean: f64,
    pub outlier_std: f64,
    pub outlier_sample_fraction: f64,
    pub outlier_pixel_fraction: f64,
    pub outlier_target_class: Option<usize>,
    pub outlier_persistent: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            dataset: DatasetKind::Synthetic,
            method: Method::Fedtilt,
            model: ModelChoice::Mlp,
            hidden: vec![128, 64],
            num_clients: 20,
            participation: run.participation,
            batch_size: run.batch_size,
            rounds: 20,
            client_epochs: run.client_epochs,
            server_epochs: run.server_epochs,
            lr_intermediate: run.lr_intermediate,
            lr_personal: run.lr_personal,
            lr_server: run.lr_server,
            q: 0.0,
            tau: 0.0,
            lambda: 0.0,
            mu: run.tilt.mu,
            seed: 0,
            aggregation: ServerAggregation::GradientDescent,
            personalization: Personalization::Independent,
            classes_per_client: 2,
            synthetic_classes: 10,
            synthetic_dim: 64,
            synthetic_per_class: 200,
            synthetic_noise: 0.3,
            idx_images: String::new(),
            idx_labels: String::new(),
            idx_limit: 2000,
            outliers: OutlierChoice::None,
            outlier_mean: 0.0,
            outlier_std: 1.0,
            outlier_sample_fraction: 0.1,
            outlier_pixel_fraction: 0.3,
            outlier_target_class: None,
            outlier_persistent: true,
        }
    }
}

impl ExperimentConfig {
    /// Preset for one of the three two-client toy experiments.
    pub fn toy(experiment: u32) -> CliResult<Self> {
        let (dataset, tau, lambda) = match experiment {
            1 => (DatasetKind::Toy1, 1.0, 1.0),
            2 => (DatasetKind::Toy2, 100.0, 10.0),
            3 => (DatasetKind::Toy3, 10.0, -100.0),
            other => {
                return Err(CliError::Config(format!(
                    "toy experiment must be 1, 2 or 3, got {other}"
                )))
            }
        };
        let mut cfg = Self {
            dataset,
            model: ModelChoice::Logistic,
            hidden: Vec::new(),
            num_clients: 2,
            participation: 1.0,
            batch_size: 10,
            rounds: 30,
            client_epochs: 2,
            lr_intermediate: 0.05,
            lr_personal: 0.05,
            tau,
            lambda,
            ..Self::default()
        };
        if experiment > 1 {
            // Extreme tilts learn slowly; train longer with larger steps.
            cfg.rounds = 50;
            cfg.client_epochs = 10;
            cfg.lr_intermediate = 0.2;
            cfg.lr_personal = 0.2;
        }
        if experiment == 3 {
            // Noise on a tenth of the high-variance group (label 0).
            cfg.outliers = OutlierChoice::Gaussian;
            cfg.outlier_mean = 0.0;
            cfg.outlier_std = 0.15;
            cfg.outlier_sample_fraction = 0.1;
            cfg.outlier_target_class = Some(0);
            cfg.outlier_persistent = true;
        }
        Ok(cfg)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            num_clients: self.num_clients,
            participation: self.participation,
            batch_size: self.batch_size,
            global_rounds: self.rounds,
            client_epochs: self.client_epochs,
            server_epochs: self.server_epochs,
            lr_intermediate: self.lr_intermediate,
            lr_personal: self.lr_personal,
            lr_server: self.lr_server,
            tilt: TiltConfig {
                q: self.q,
                tau: self.tau,
                lambda: self.lambda,
                mu: self.mu,
                dist: Distance::SquaredEuclidean,
            },
            seed: self.seed,
            aggregation: self.aggregation,
            personalization: self.personalization,
        }
    }

    pub fn outlier_spec(&self) -> Option<OutlierSpec> {
        let kind = match self.outliers {
            OutlierChoice::None => return None,
            OutlierChoice::Gaussian => OutlierKind::GaussianNoise {
                mean: self.outlier_mean,
                std: self.outlier_std,
                sample_fraction: self.outlier_sample_fraction,
                target_class: self.outlier_target_class,
            },
            OutlierChoice::Pixel => OutlierKind::PixelCorruption {
                pixel_fraction: self.outlier_pixel_fraction,
                sample_fraction: self.outlier_sample_fraction,
            },
        };
        Some(OutlierSpec {
            kind,
            persistent: self.outlier_persistent,
        })
    }

    pub fn model_spec(&self, dataset: &FederatedDataset) -> ModelSpec {
        match self.model {
            ModelChoice::Logistic => ModelSpec::logistic_binary(dataset.input_dim),
            ModelChoice::Softmax => ModelSpec::softmax_linear(dataset.input_dim, dataset.num_classes),
            ModelChoice::Mlp => ModelSpec::mlp(dataset.input_dim, self.hidden.clone(), dataset.num_classes),
        }
    }

    pub fn build_dataset(&self) -> crate::Result<FederatedDataset> {
        match self.dataset {
            DatasetKind::Toy1 => gen_toy(1, self.seed),
            DatasetKind::Toy2 => gen_toy(2, self.seed),
            DatasetKind::Toy3 => gen_toy(3, self.seed),
            DatasetKind::Synthetic => {
                let pool = gen_image_like(
                    self.synthetic_classes,
                    self.synthetic_dim,
                    self.synthetic_per_class,
                    self.synthetic_noise,
                    self.seed,
                )?;
                partition_noniid(&pool, self.num_clients, self.classes_per_client, self.seed)
            }
            DatasetKind::Idx => {
                if self.idx_images.is_empty() || self.idx_labels.is_empty() {
                    return Err(crate::Error::InvalidConfig(
                        "dataset = \"idx\" needs idx_images and idx_labels".into(),
                    ));
                }
                let mut pool = load_idx(&self.idx_images, &self.idx_labels)?;
                if self.idx_limit > 0 {
                    pool.truncate(self.idx_limit);
                }
                partition_noniid(&pool, self.num_clients, self.classes_per_client, self.seed)
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Parses `key=value`; the value is read as a TOML value, falling back to a bare string.
fn parse_override(raw: &str) -> CliResult<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {raw:?}")))?;
    let key = key.trim().to_string();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

/// Integers written for float-valued keys are promoted so `lambda = 100` works.
fn merge(base: &mut toml::Table, key: String, value: toml::Value) {
    let value = match (base.get(&key), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    base.insert(key, value);
}

/// Applies the config file and overrides on top of `base`.
pub fn layer_config(base: &ExperimentConfig, file: Option<&Path>, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let mut table = toml::Table::try_from(base).map_err(config_err)?;
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let parsed: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("cannot parse config file {}: {e}", path.display())))?;
        for (k, v) in parsed {
            merge(&mut table, k, v);
        }
    }
    for raw in overrides {
        let (k, v) = parse_override(raw)?;
        merge(&mut table, k, v);
    }
    table.try_into().map_err(config_err)
}

// ---------------------------------------------------------------------------
// Arguments

#[derive(Debug, Parser)]
#[command(name = "fedtilt", version, about = "Federated learning with tilted losses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write rounds.csv and summary.json.
    Run(CommonArgs),
    /// Run the cross product of lambda and tau grids.
    Sweep(SweepArgs),
    /// Run a preset two-client toy experiment (1, 2 or 3).
    Toy {
        #[arg(value_parser = clap::value_parser!(u32).range(1..=3))]
        experiment: u32,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run gradient, limit, reduction and convergence checks.
    Verify,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Run a reference method instead of the tilted one.
    #[arg(long, value_enum)]
    pub baseline: Option<Method>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub tau_grid: Vec<f64>,
    /// Start from a toy experiment preset instead of the defaults.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    pub toy: Option<u32>,
}

fn resolve(base: ExperimentConfig, args: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = layer_config(&base, args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(method) = args.baseline {
        cfg.method = method;
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Execution

/// Builds the dataset and model and trains. Setup failures are configuration
/// errors; failures during training are runtime errors.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<RunOutput> {
    let dataset = cfg.build_dataset().map_err(config_err)?;
    let model = cfg.model_spec(&dataset);
    model.validate().map_err(config_err)?;
    let run_cfg = cfg.run_config();
    run_cfg.validate().map_err(config_err)?;
    if dataset.num_clients() != run_cfg.num_clients {
        return Err(CliError::Config(format!(
            "dataset {:?} has {} clients but num_clients = {}",
            cfg.dataset,
            dataset.num_clients(),
            run_cfg.num_clients
        )));
    }
    let outliers = cfg.outlier_spec();
    if let Some(spec) = &outliers {
        spec.validate().map_err(config_err)?;
    }
    let outliers = outliers.as_ref();
    let result = match cfg.method {
        Method::Fedtilt => protocol::run(&dataset, &model, &run_cfg, outliers),
        Method::Fedavg => run_baseline(BaselineKind::FedAvg, &dataset, &model, &run_cfg, outliers),
        Method::Fedprox => run_baseline(
            BaselineKind::FedProx { mu: cfg.mu },
            &dataset,
            &model,
            &run_cfg,
            outliers,
        ),
        Method::Ditto => run_baseline(BaselineKind::Ditto { mu: cfg.mu }, &dataset, &model, &run_cfg, outliers),
    };
    result.map_err(runtime_err)
}

/// Metric columns of a round, formatted as written to CSV.
pub fn metric_fields(r: &RoundRecord) -> [String; 7] {
    let p = &r.report;
    [
        p.mean_test_acc_personalized,
        p.mean_test_acc_global,
        p.client_fairness_sigma,
        p.data_fairness_mu_sigma,
        p.data_fairness_sigma_sigma,
        r.global_objective,
        r.mean_local_objective,
    ]
    .map(|x| format!("{x:.6}"))
}

pub fn rounds_csv(records: &[RoundRecord]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUNDS_HEADER).map_err(runtime_err)?;
    for r in records {
        let mut row = vec![r.report.round.to_string()];
        row.extend(metric_fields(r));
        w.write_record(&row).map_err(runtime_err)?;
    }
    w.into_inner().map_err(runtime_err)
}

/// Writes through a temporary sibling and renames into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Runtime(format!("cannot move {} into place: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    method: Method,
    seed: u64,
    config_hash: String,
    config: &'a ExperimentConfig,
    rounds: usize,
    #[serde(rename = "final")]
    last: Option<&'a RoundRecord>,
    wall_time_secs: f64,
}

fn write_summary(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    records: &[RoundRecord],
    started: Instant,
) -> CliResult<()> {
    let summary = Summary {
        command,
        method: cfg.method,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg,
        rounds: records.len(),
        last: records.last(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_vec_pretty(&summary).map_err(runtime_err)?;
    write_atomic(&dir.join("summary.json"), &json)
}

/// Trains `cfg` and writes `rounds.csv` and `summary.json` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, command: &str) -> CliResult<Vec<RoundRecord>> {
    let started = Instant::now();
    let output = execute(cfg)?;
    create_dir(out)?;
    write_atomic(&out.join("rounds.csv"), &rounds_csv(&output.records)?)?;
    write_summary(out, command, cfg, &output.records, started)?;
    if let Some(last) = output.records.last() {
        log::info!(
            "round {}: personalized acc {:.2}%, client sigma {:.3}",
            last.report.round,
            last.report.mean_test_acc_personalized,
            last.report.client_fairness_sigma
        );
    }
    Ok(output.records)
}

fn cell_name(lambda: f64, tau: f64) -> String {
    format!("lambda_{lambda}_tau_{tau}")
}

/// Runs every `(lambda, tau)` cell concurrently, then writes `sweep.csv` in grid order.
pub fn cmd_sweep(base: &ExperimentConfig, lambdas: &[f64], taus: &[f64], out: &Path) -> CliResult<()> {
    if lambdas.is_empty() || taus.is_empty() {
        return Err(CliError::Config("sweep grids must be non-empty".into()));
    }
    if base.rounds == 0 {
        return Err(CliError::Config("sweep needs rounds >= 1".into()));
    }
    let cells: Vec<(f64, f64)> = lambdas
        .iter()
        .flat_map(|&l| taus.iter().map(move |&t| (l, t)))
        .collect();
    let cells_dir = out.join("cells");
    create_dir(&cells_dir)?;
    let finals = cells
        .par_iter()
        .map(|&(lambda, tau)| {
            let cfg = ExperimentConfig {
                lambda,
                tau,
                ..base.clone()
            };
            let records = cmd_run(&cfg, &cells_dir.join(cell_name(lambda, tau)), "sweep")?;
            Ok(records.last().cloned().expect("rounds >= 1"))
        })
        .collect::<CliResult<Vec<RoundRecord>>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["lambda", "tau"];
    header.extend(&ROUNDS_HEADER[1..]);
    w.write_record(&header).map_err(runtime_err)?;
    for ((lambda, tau), last) in cells.iter().zip(&finals) {
        let mut row = vec![lambda.to_string(), tau.to_string()];
        row.extend(metric_fields(last));
        w.write_record(&row).map_err(runtime_err)?;
    }
    let bytes = w.into_inner().map_err(runtime_err)?;
    write_atomic(&out.join("sweep.csv"), &bytes)
}

/// Runs `checks`, printing one line each; fails naming every failed check.
pub fn cmd_verify(checks: &[Check], sink: &mut impl Write) -> CliResult<()> {
    let outcomes = run_checks(checks);
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        writeln!(sink, "{status} [{}] {}: {}", o.category, o.name, o.detail).map_err(runtime_err)?;
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    writeln!(
        sink,
        "{}/{} checks passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    )
    .map_err(runtime_err)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = resolve(ExperimentConfig::default(), &args)?;
            cmd_run(&cfg, &args.out, "run").map(|_| ())
        }
        Command::Toy { experiment, common } => {
            let cfg = resolve(ExperimentConfig::toy(experiment)?, &common)?;
            cmd_run(&cfg, &common.out, "toy").map(|_| ())
        }
        Command::Sweep(args) => {
            let base = match args.toy {
                Some(e) => ExperimentConfig::toy(e)?,
                None => ExperimentConfig::default(),
            };
            let cfg = resolve(base, &args.common)?;
            cmd_sweep(&cfg, &args.lambda_grid, &args.tau_grid, &args.common.out)
        }
        Command::Verify => cmd_verify(&standard_suite(), &mut std::io::stdout().lock()),
    }
}

/// Sizes the global thread pool from `FEDTILT_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    if let Ok(raw) = std::env::var("FEDTILT_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| CliError::Config(format!("FEDTILT_THREADS must be a positive integer, got {raw:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(runtime_err)?;
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match configure_threads().and_then(|()| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
