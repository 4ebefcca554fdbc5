//! Reference FedAvg, FedProx and Ditto.
//!
//! These never touch the tilt machinery or [`TiltConfig`](crate::tilt::TiltConfig):
//! local training is plain mini-batch SGD on the mean cross-entropy and the
//! server averages. They share the client-sampling and batch-order streams
//! with [`protocol`](crate::protocol), which makes them usable as oracles for
//! the special-case reductions of the tilted method.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_outliers, Example, FederatedDataset, OutlierSpec};
use crate::error::{Error, Result};
use crate::metrics::{fairness_report, RoundRecord};
use crate::models::{loss, loss_and_grad, ModelSpec};
use crate::params::ParamVector;
use crate::protocol::{
    batch_rng, epoch_batches, initial_model, outlier_seed, run_with as run_tilted, select_clients, Personalization,
    RoundSnapshot, RunConfig, RunOutput, ServerAggregation,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    FedAvg,
    FedProx { mu: f64 },
    Ditto { mu: f64 },
}

impl BaselineKind {
    fn mu(self) -> f64 {
        match self {
            BaselineKind::FedAvg => 0.0,
            BaselineKind::FedProx { mu } | BaselineKind::Ditto { mu } => mu,
        }
    }
}

fn mean_batch_gradient(model: &ModelSpec, params: &ParamVector, batch: &[&Example]) -> Result<ParamVector> {
    let mut g = ParamVector::zeros(params.len());
    for ex in batch {
        g.axpy(1.0, &loss_and_grad(model, params, ex)?.gradient);
    }
    g.scale(1.0 / batch.len() as f64);
    Ok(g)
}

fn mean_loss(model: &ModelSpec, params: &ParamVector, shard: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in shard {
        total += loss(model, params, ex)?;
    }
    Ok(total / shard.len() as f64)
}

fn average(models: &[ParamVector]) -> ParamVector {
    let mut sum = vec![0.0; models[0].len()];
    for m in models {
        for (s, x) in sum.iter_mut().zip(m.iter()) {
            *s += x;
        }
    }
    let n = models.len() as f64;
    ParamVector::new(sum.into_iter().map(|s| s / n).collect())
}

/// Local update of one client; returns `(client model, personalized model)`.
#[allow(clippy::too_many_arguments)]
fn local_update(
    kind: BaselineKind,
    model: &ModelSpec,
    cfg: &RunConfig,
    id: usize,
    train: &[Example],
    w_prev: &ParamVector,
    v_prev: &ParamVector,
    outliers: Option<&OutlierSpec>,
    round: usize,
) -> Result<(ParamVector, ParamVector)> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingShard(id));
    }
    let corrupted;
    let shard = match outliers {
        Some(spec) => {
            corrupted = inject_outliers(train, spec, round as u64, outlier_seed(cfg.seed, id))?;
            &corrupted[..]
        }
        None => train,
    };
    let mut rng = batch_rng(cfg.seed, round, id);
    let mut w = w_prev.clone();
    let mut v = v_prev.clone();
    for _ in 0..cfg.client_epochs {
        for batch in epoch_batches(&mut rng, shard.len(), cfg.batch_size) {
            let members: Vec<&Example> = batch.iter().map(|&i| &shard[i]).collect();
            let mut g = mean_batch_gradient(model, &w, &members)?;
            if let BaselineKind::FedProx { mu } = kind {
                for ((gi, wi), ai) in g.iter_mut().zip(w.iter()).zip(w_prev.iter()) {
                    *gi += mu * (wi - ai);
                }
            }
            w.axpy(-cfg.lr_intermediate, &g);
            if let BaselineKind::Ditto { mu } = kind {
                let mut gv = mean_batch_gradient(model, &v, &members)?;
                for ((gi, vi), ai) in gv.iter_mut().zip(v.iter()).zip(w_prev.iter()) {
                    *gi += mu * (vi - ai);
                }
                v.axpy(-cfg.lr_personal, &gv);
            }
        }
    }
    Ok((w, v))
}

pub fn run_baseline(
    kind: BaselineKind,
    dataset: &FederatedDataset,
    model: &ModelSpec,
    cfg: &RunConfig,
    outliers: Option<&OutlierSpec>,
) -> Result<RunOutput> {
    run_baseline_with(kind, dataset, model, cfg, outliers, |_| {})
}

/// [`run_baseline`] with a callback invoked after every round.
pub fn run_baseline_with(
    kind: BaselineKind,
    dataset: &FederatedDataset,
    model: &ModelSpec,
    cfg: &RunConfig,
    outliers: Option<&OutlierSpec>,
    mut observer: impl FnMut(&RoundSnapshot<'_>),
) -> Result<RunOutput> {
    let mu = kind.mu();
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::InvalidConfig(format!("mu must be non-negative, got {mu}")));
    }
    model.validate()?;
    dataset.validate()?;
    if dataset.num_clients() != cfg.num_clients {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} clients, config expects {}",
            dataset.num_clients(),
            cfg.num_clients
        )));
    }
    if cfg.batch_size == 0 || cfg.client_epochs == 0 || !(cfg.participation > 0.0 && cfg.participation <= 1.0) {
        return Err(Error::InvalidConfig(
            "batch_size and client_epochs must be positive, participation in (0, 1]".into(),
        ));
    }
    if let Some(spec) = outliers {
        spec.validate()?;
    }

    let mut w = initial_model(model, cfg.seed);
    let mut personal = vec![w.clone(); dataset.num_clients()];
    let m = cfg.participants();
    let mut records = Vec::with_capacity(cfg.global_rounds);
    for round in 1..=cfg.global_rounds {
        let selected = select_clients(cfg.seed, round, cfg.num_clients, m);
        let updates = selected
            .par_iter()
            .map(|&id| {
                local_update(
                    kind,
                    model,
                    cfg,
                    id,
                    &dataset.clients[id].train,
                    &w,
                    &personal[id],
                    outliers,
                    round,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut client_models = Vec::with_capacity(updates.len());
        for (&id, (w_n, v_n)) in selected.iter().zip(updates) {
            if matches!(kind, BaselineKind::Ditto { .. }) {
                personal[id] = v_n;
            }
            client_models.push(w_n);
        }
        w = average(&client_models);
        if !matches!(kind, BaselineKind::Ditto { .. }) {
            personal.iter_mut().for_each(|p| *p = w.clone());
        }

        let global_objective =
            client_models.iter().map(|m| m.squared_distance(&w)).sum::<f64>() / client_models.len() as f64;
        let mut local_sum = 0.0;
        for &id in &selected {
            let p = &personal[id];
            local_sum += mean_loss(model, p, &dataset.clients[id].train)? + 0.5 * mu * p.squared_distance(&w);
        }
        let report = fairness_report(&personal, model, dataset, &w, round)?;
        records.push(RoundRecord {
            report,
            global_objective,
            mean_local_objective: local_sum / selected.len() as f64,
        });
        observer(&RoundSnapshot {
            round,
            selected: &selected,
            global: &w,
            intermediate: &client_models,
            personalized: &personal,
        });
    }
    Ok(RunOutput {
        records,
        global: w,
        personalized: personal,
    })
}

/// Which special case of the tilted method to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Zero tilts with personalized models tied to the global model reproduce FedAvg.
    FedAvg,
    /// Zero tilts with personalized and intermediate models tied reproduce FedProx.
    FedProx,
    /// Zero tilts reproduce Ditto.
    Ditto,
}

impl TryFrom<u32> for Reduction {
    type Error = Error;

    fn try_from(prop: u32) -> Result<Self> {
        match prop {
            1 => Ok(Reduction::FedAvg),
            2 => Ok(Reduction::FedProx),
            3 => Ok(Reduction::Ditto),
            other => Err(Error::InvalidConfig(format!("unknown reduction {other}"))),
        }
    }
}

type Trajectory = Vec<(ParamVector, Vec<ParamVector>, Vec<ParamVector>)>;

/// Runs the tilted method in a special-case configuration next to the
/// matching baseline and returns the largest `‖·‖∞` deviation of global and
/// personalized models over all rounds.
///
/// Requires an exactly comparable instance: at most 4 clients, full
/// participation, full-batch training and equal client learning rates.
pub fn check_reduction(
    reduction: Reduction,
    dataset: &FederatedDataset,
    model: &ModelSpec,
    cfg: &RunConfig,
) -> Result<f64> {
    let max_shard = dataset.clients.iter().map(|c| c.train.len()).max().unwrap_or(0);
    let mut problems = Vec::new();
    if cfg.num_clients > 4 {
        problems.push(format!("num_clients = {} (max 4)", cfg.num_clients));
    }
    if cfg.participants() != cfg.num_clients {
        problems.push(format!(
            "participation = {} (need full participation)",
            cfg.participation
        ));
    }
    if cfg.batch_size < max_shard {
        problems.push(format!(
            "batch_size = {} (need >= {max_shard} for full batch)",
            cfg.batch_size
        ));
    }
    if cfg.lr_intermediate != cfg.lr_personal {
        problems.push(format!(
            "lr_intermediate = {} differs from lr_personal = {}",
            cfg.lr_intermediate, cfg.lr_personal
        ));
    }
    if cfg.global_rounds == 0 {
        problems.push("global_rounds = 0".into());
    }
    if !problems.is_empty() {
        return Err(Error::NotComparable(problems.join("; ")));
    }

    let mut tilted_cfg = cfg.clone();
    tilted_cfg.tilt.q = 0.0;
    tilted_cfg.tilt.tau = 0.0;
    tilted_cfg.tilt.lambda = 0.0;
    tilted_cfg.aggregation = ServerAggregation::AnalyticMean;
    let mu = cfg.tilt.mu;
    let (personalization, kind) = match reduction {
        Reduction::FedAvg => (Personalization::TiedToGlobal, BaselineKind::FedAvg),
        Reduction::FedProx => (Personalization::TiedToIntermediate, BaselineKind::FedProx { mu }),
        Reduction::Ditto => (Personalization::Independent, BaselineKind::Ditto { mu }),
    };
    tilted_cfg.personalization = personalization;

    fn record(traj: &mut Trajectory) -> impl FnMut(&RoundSnapshot<'_>) + '_ {
        move |s| traj.push((s.global.clone(), s.intermediate.to_vec(), s.personalized.to_vec()))
    }
    let mut tilted: Trajectory = Vec::new();
    run_tilted(dataset, model, &tilted_cfg, None, record(&mut tilted))?;
    let mut reference: Trajectory = Vec::new();
    run_baseline_with(kind, dataset, model, cfg, None, record(&mut reference))?;

    let mut worst: f64 = 0.0;
    for ((tw, _, tv), (bw, bi, bv)) in tilted.iter().zip(&reference) {
        worst = worst.max(tw.max_abs_diff(bw));
        // Tied personalized models must equal the model each baseline client ends up with.
        let expected: &[ParamVector] = match reduction {
            Reduction::FedAvg | Reduction::Ditto => bv,
            Reduction::FedProx => bi,
        };
        for (a, b) in tv.iter().zip(expected) {
            worst = worst.max(a.max_abs_diff(b));
        }
    }
    Ok(worst)
}
