//! The federated round loop.
//!
//! Each round samples `m = max(⌊ρN⌋, 1)` clients without replacement. Every
//! sampled client trains two models on the same seeded mini-batches: an
//! intermediate copy of the previous global model, stepped along the
//! two-level tilted loss, and its personalized model, stepped along the local
//! objective anchored at the previous global model. The server then runs
//! `E2` gradient steps on the global tilted loss of the intermediate models.
//!
//! Randomness is keyed by `(run seed, purpose, round, client)` so client
//! updates can run concurrently without changing results.

use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_outliers, Example, FederatedDataset, OutlierSpec};
use crate::error::{Error, Result};
use crate::metrics::{fairness_report, RoundRecord};
use crate::models::{init_params, loss, loss_and_grad, ModelSpec};
use crate::params::{mean_of, ParamVector};
use crate::seed::{self, tag};
use crate::tilt::{
    class_tilted_loss, client_tilted_loss, global_tilted_loss, local_objective, tilted_aggregate, ClassTilt,
    LossSample, TiltConfig, ZERO_TILT_EPS,
};

/// How the server turns intermediate models into the next global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerAggregation {
    /// `E2` gradient steps on the global tilted loss.
    #[default]
    GradientDescent,
    /// Closed-form minimizer for `q = 0`: the mean of the intermediate models.
    AnalyticMean,
}

/// Relationship between personalized and other models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Personalization {
    /// Personalized models train on their own local objective.
    #[default]
    Independent,
    /// Personalized models are the global model (infinite proximal weight).
    TiedToGlobal,
    /// Personalized and intermediate models coincide; the shared model trains
    /// on the local objective.
    TiedToIntermediate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub num_clients: usize,
    /// Fraction of clients sampled per round, in `(0, 1]`.
    pub participation: f64,
    pub batch_size: usize,
    pub global_rounds: usize,
    pub client_epochs: usize,
    pub server_epochs: usize,
    pub lr_intermediate: f64,
    pub lr_personal: f64,
    pub lr_server: f64,
    pub tilt: TiltConfig,
    pub seed: u64,
    #[serde(default)]
    pub aggregation: ServerAggregation,
    #[serde(default)]
    pub personalization: Personalization,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_clients: 100,
            participation: 0.1,
            batch_size: 10,
            global_rounds: 50,
            client_epochs: 10,
            server_epochs: 50,
            lr_intermediate: 0.01,
            lr_personal: 0.01,
            lr_server: 0.1,
            tilt: TiltConfig::default(),
            seed: 0,
            aggregation: ServerAggregation::GradientDescent,
            personalization: Personalization::Independent,
        }
    }
}

impl RunConfig {
    /// Clients sampled per round.
    pub fn participants(&self) -> usize {
        ((self.participation * self.num_clients as f64).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_clients == 0 {
            return bad("num_clients must be positive".into());
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return bad(format!("participation must be in (0, 1], got {}", self.participation));
        }
        if self.batch_size == 0 || self.client_epochs == 0 || self.server_epochs == 0 {
            return bad("batch_size, client_epochs and server_epochs must be positive".into());
        }
        for (name, lr) in [
            ("lr_intermediate", self.lr_intermediate),
            ("lr_personal", self.lr_personal),
            ("lr_server", self.lr_server),
        ] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {lr}"));
            }
        }
        self.tilt.validate()?;
        if self.aggregation == ServerAggregation::AnalyticMean && self.tilt.q.abs() >= ZERO_TILT_EPS {
            return bad(format!("analytic mean aggregation requires q = 0, got {}", self.tilt.q));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub clean_train: Vec<Example>,
    pub test: Vec<Example>,
    /// Personalized model.
    pub v: ParamVector,
    pub last_selected_round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub w: ParamVector,
    pub round: usize,
}

/// State visible to a run observer after each round.
#[derive(Debug)]
pub struct RoundSnapshot<'a> {
    pub round: usize,
    pub selected: &'a [usize],
    pub global: &'a ParamVector,
    pub intermediate: &'a [ParamVector],
    pub personalized: &'a [ParamVector],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub global: ParamVector,
    pub personalized: Vec<ParamVector>,
}

/// The `m` clients sampled in `round`, ascending.
pub fn select_clients(seed: u64, round: usize, num_clients: usize, m: usize) -> Vec<usize> {
    let mut rng = seed::rng(&[seed, tag::CLIENT_SAMPLING, round as u64]);
    let mut chosen = index::sample(&mut rng, num_clients, m.min(num_clients)).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Random stream for one client's mini-batch order within one round.
pub fn batch_rng(seed: u64, round: usize, client: usize) -> ChaCha8Rng {
    seed::rng(&[seed, tag::BATCH_ORDER, round as u64, client as u64])
}

/// Shuffles `0..len` and cuts it into batches of `batch_size`; the last batch may be short.
pub fn epoch_batches(rng: &mut ChaCha8Rng, len: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Seed for a client's outlier stream; rounds are mixed in by the injector.
pub fn outlier_seed(seed: u64, client: usize) -> u64 {
    seed::derive(&[seed, tag::OUTLIERS, client as u64])
}

fn group_by_class<'a>(examples: impl Iterator<Item = &'a Example>) -> Vec<(usize, Vec<&'a Example>)> {
    let mut groups: Vec<(usize, Vec<&Example>)> = Vec::new();
    for ex in examples {
        match groups.iter_mut().find(|(k, _)| *k == ex.label) {
            Some((_, members)) => members.push(ex),
            None => groups.push((ex.label, vec![ex])),
        }
    }
    groups.sort_by_key(|(k, _)| *k);
    groups
}

/// Two-level tilted loss and gradient over a set of examples: a `λ`-tilt
/// within each class present, then a class-size-weighted `τ`-tilt across classes.
pub fn two_level_tilted_loss<'a>(
    model: &ModelSpec,
    params: &[f64],
    examples: impl Iterator<Item = &'a Example>,
    tau: f64,
    lambda: f64,
) -> Result<LossSample> {
    let mut per_class = Vec::new();
    for (_, members) in group_by_class(examples) {
        let samples = members
            .iter()
            .map(|ex| loss_and_grad(model, params, ex))
            .collect::<Result<Vec<_>>>()?;
        let class = class_tilted_loss(&samples, lambda)?;
        per_class.push(ClassTilt {
            size: members.len(),
            value: class.value,
            gradient: class.gradient,
        });
    }
    client_tilted_loss(&per_class, tau)
}

/// Value of the two-level tilted loss, without gradients.
pub fn two_level_tilted_value<'a>(
    model: &ModelSpec,
    params: &[f64],
    examples: impl Iterator<Item = &'a Example>,
    tau: f64,
    lambda: f64,
) -> Result<f64> {
    let mut values = Vec::new();
    let mut sizes = Vec::new();
    for (_, members) in group_by_class(examples) {
        let losses = members
            .iter()
            .map(|ex| loss(model, params, ex))
            .collect::<Result<Vec<_>>>()?;
        values.push(tilted_aggregate(&losses, &vec![1.0; losses.len()], lambda)?);
        sizes.push(members.len() as f64);
    }
    tilted_aggregate(&values, &sizes, tau)
}

/// One client's round: returns `(intermediate model, personalized model)`.
///
/// The intermediate model starts from `w_prev` and the personalized model
/// from `client.v`; both take one step per mini-batch for `E` epochs. The
/// proximal anchor stays at `w_prev` for the whole round.
pub fn client_update(
    client: &ClientState,
    w_prev: &ParamVector,
    model: &ModelSpec,
    cfg: &RunConfig,
    outliers: Option<&OutlierSpec>,
    round: usize,
) -> Result<(ParamVector, ParamVector)> {
    if client.v.len() != w_prev.len() {
        return Err(Error::LengthMismatch {
            expected: w_prev.len(),
            actual: client.v.len(),
        });
    }
    if client.clean_train.is_empty() {
        return Err(Error::EmptyTrainingShard(client.id));
    }
    let corrupted;
    let shard: &[Example] = match outliers {
        Some(spec) => {
            corrupted = inject_outliers(
                &client.clean_train,
                spec,
                round as u64,
                outlier_seed(cfg.seed, client.id),
            )?;
            &corrupted
        }
        None => &client.clean_train,
    };

    let TiltConfig { tau, lambda, mu, .. } = cfg.tilt;
    let mut rng = batch_rng(cfg.seed, round, client.id);
    let mut w_n = w_prev.clone();
    let mut v_n = match cfg.personalization {
        Personalization::TiedToIntermediate => w_prev.clone(),
        _ => client.v.clone(),
    };
    for _ in 0..cfg.client_epochs {
        for batch in epoch_batches(&mut rng, shard.len(), cfg.batch_size) {
            let members = || batch.iter().map(|&i| &shard[i]);
            match cfg.personalization {
                Personalization::Independent => {
                    let g_w = two_level_tilted_loss(model, &w_n, members(), tau, lambda)?;
                    w_n.axpy(-cfg.lr_intermediate, &g_w.gradient);
                    let tilt_v = two_level_tilted_loss(model, &v_n, members(), tau, lambda)?;
                    let g_v = local_objective(&v_n, w_prev, &tilt_v, mu)?;
                    v_n.axpy(-cfg.lr_personal, &g_v.gradient);
                }
                Personalization::TiedToGlobal => {
                    let g_w = two_level_tilted_loss(model, &w_n, members(), tau, lambda)?;
                    w_n.axpy(-cfg.lr_intermediate, &g_w.gradient);
                }
                Personalization::TiedToIntermediate => {
                    let tilt_v = two_level_tilted_loss(model, &v_n, members(), tau, lambda)?;
                    let g_v = local_objective(&v_n, w_prev, &tilt_v, mu)?;
                    v_n.axpy(-cfg.lr_personal, &g_v.gradient);
                }
            }
        }
    }
    Ok(match cfg.personalization {
        Personalization::Independent => (w_n, v_n),
        Personalization::TiedToGlobal => (w_n, w_prev.clone()),
        Personalization::TiedToIntermediate => (v_n.clone(), v_n),
    })
}

/// Global model update from the round's intermediate models.
pub fn server_update(w_prev: &ParamVector, client_models: &[ParamVector], cfg: &RunConfig) -> Result<ParamVector> {
    if client_models.is_empty() {
        return Err(Error::EmptyModelSet);
    }
    match cfg.aggregation {
        ServerAggregation::AnalyticMean => {
            if cfg.tilt.q.abs() >= ZERO_TILT_EPS {
                return Err(Error::InvalidConfig(format!(
                    "analytic mean aggregation requires q = 0, got {}",
                    cfg.tilt.q
                )));
            }
            if let Some(bad) = client_models.iter().find(|m| m.len() != w_prev.len()) {
                return Err(Error::LengthMismatch {
                    expected: w_prev.len(),
                    actual: bad.len(),
                });
            }
            Ok(mean_of(client_models).expect("nonempty"))
        }
        ServerAggregation::GradientDescent => {
            let mut w = w_prev.clone();
            for _ in 0..cfg.server_epochs {
                let g = global_tilted_loss(client_models, &w, cfg.tilt.q, cfg.tilt.dist)?;
                w.axpy(-cfg.lr_server, &g.gradient);
            }
            Ok(w)
        }
    }
}

fn check_dataset(dataset: &FederatedDataset, model: &ModelSpec, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    model.validate()?;
    dataset.validate()?;
    if dataset.num_clients() != cfg.num_clients {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} clients, config expects {}",
            dataset.num_clients(),
            cfg.num_clients
        )));
    }
    if dataset.input_dim != model.input_dim || dataset.num_classes > model.num_classes {
        return Err(Error::InvalidConfig(format!(
            "model ({} inputs, {} classes) does not fit dataset ({} inputs, {} classes)",
            model.input_dim, model.num_classes, dataset.input_dim, dataset.num_classes
        )));
    }
    Ok(())
}

/// Initial global model shared by every method for a given run seed.
pub fn initial_model(model: &ModelSpec, seed: u64) -> ParamVector {
    init_params(model, seed::derive(&[seed, tag::INIT]))
}

pub fn run(
    dataset: &FederatedDataset,
    model: &ModelSpec,
    cfg: &RunConfig,
    outliers: Option<&OutlierSpec>,
) -> Result<RunOutput> {
    run_with(dataset, model, cfg, outliers, |_| {})
}

/// [`run`] with a callback invoked after every round.
pub fn run_with(
    dataset: &FederatedDataset,
    model: &ModelSpec,
    cfg: &RunConfig,
    outliers: Option<&OutlierSpec>,
    mut observer: impl FnMut(&RoundSnapshot<'_>),
) -> Result<RunOutput> {
    check_dataset(dataset, model, cfg)?;
    if let Some(spec) = outliers {
        spec.validate()?;
    }
    let w0 = initial_model(model, cfg.seed);
    let mut global = GlobalState {
        w: w0.clone(),
        round: 0,
    };
    let mut clients: Vec<ClientState> = dataset
        .clients
        .iter()
        .enumerate()
        .map(|(id, c)| ClientState {
            id,
            clean_train: c.train.clone(),
            test: c.test.clone(),
            v: w0.clone(),
            last_selected_round: None,
        })
        .collect();
    let m = cfg.participants();
    let mut records = Vec::with_capacity(cfg.global_rounds);

    for round in 1..=cfg.global_rounds {
        let selected = select_clients(cfg.seed, round, cfg.num_clients, m);
        let updates = selected
            .par_iter()
            .map(|&id| client_update(&clients[id], &global.w, model, cfg, outliers, round))
            .collect::<Result<Vec<_>>>()?;
        let mut intermediate = Vec::with_capacity(updates.len());
        for (&id, (w_n, v_n)) in selected.iter().zip(updates) {
            clients[id].v = v_n;
            clients[id].last_selected_round = Some(round);
            intermediate.push(w_n);
        }
        global.w = server_update(&global.w, &intermediate, cfg)?;
        global.round = round;
        if !global.w.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "global model diverged in round {round}; reduce the learning rates"
            )));
        }
        if cfg.personalization == Personalization::TiedToGlobal {
            for c in &mut clients {
                c.v = global.w.clone();
            }
        }

        let global_objective = global_tilted_loss(&intermediate, &global.w, cfg.tilt.q, cfg.tilt.dist)?.value;
        let mut local_sum = 0.0;
        for &id in &selected {
            let c = &clients[id];
            let tilt = two_level_tilted_value(model, &c.v, c.clean_train.iter(), cfg.tilt.tau, cfg.tilt.lambda)?;
            local_sum += tilt + 0.5 * cfg.tilt.mu * c.v.squared_distance(&global.w);
        }
        let personalized: Vec<ParamVector> = clients.iter().map(|c| c.v.clone()).collect();
        let report = fairness_report(&personalized, model, dataset, &global.w, round)?;
        records.push(RoundRecord {
            report,
            global_objective,
            mean_local_objective: local_sum / selected.len() as f64,
        });
        observer(&RoundSnapshot {
            round,
            selected: &selected,
            global: &global.w,
            intermediate: &intermediate,
            personalized: &personalized,
        });
    }

    Ok(RunOutput {
        records,
        global: global.w,
        personalized: clients.into_iter().map(|c| c.v).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_toy;
    use crate::tilt::Distance;

    fn toy_cfg() -> RunConfig {
        RunConfig {
            num_clients: 2,
            participation: 1.0,
            batch_size: 10,
            global_rounds: 3,
            client_epochs: 1,
            server_epochs: 50,
            lr_intermediate: 0.1,
            lr_personal: 0.1,
            lr_server: 0.1,
            tilt: TiltConfig {
                q: 0.0,
                tau: 1.0,
                lambda: 1.0,
                mu: 0.01,
                dist: Distance::SquaredEuclidean,
            },
            seed: 3,
            ..RunConfig::default()
        }
    }

    fn client_from(ds: &FederatedDataset, id: usize, v: ParamVector) -> ClientState {
        ClientState {
            id,
            clean_train: ds.clients[id].train.clone(),
            test: ds.clients[id].test.clone(),
            v,
            last_selected_round: None,
        }
    }

    #[test]
    fn participants_floor_and_minimum() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.participants(), 10);
        cfg.participation = 0.001;
        assert_eq!(cfg.participants(), 1);
    }

    #[test]
    fn zero_learning_rates_leave_models_unchanged() {
        let ds = gen_toy(1, 0).unwrap();
        let model = ModelSpec::logistic_binary(2);
        let mut cfg = toy_cfg();
        cfg.lr_intermediate = 0.0;
        cfg.lr_personal = 0.0;
        let w = ParamVector::new(vec![0.3, -0.2, 0.1]);
        let v = ParamVector::new(vec![1.0, 2.0, 3.0]);
        let (w_n, v_n) = client_update(&client_from(&ds, 0, v.clone()), &w, &model, &cfg, None, 1).unwrap();
        assert_eq!((w_n, v_n), (w, v));
    }

    #[test]
    fn untilted_full_batch_step_is_plain_gradient_step() {
        let ds = gen_toy(2, 1).unwrap();
        let model = ModelSpec::logistic_binary(2);
        let mut cfg = toy_cfg();
        cfg.tilt.tau = 0.0;
        cfg.tilt.lambda = 0.0;
        cfg.batch_size = 1000;
        let client = client_from(&ds, 0, ParamVector::zeros(3));
        let w = ParamVector::new(vec![0.2, -0.1, 0.05]);
        let (w_n, _) = client_update(&client, &w, &model, &cfg, None, 1).unwrap();
        let mut expected = w.clone();
        let mut mean_grad = ParamVector::zeros(3);
        for ex in &client.clean_train {
            mean_grad.axpy(1.0, &loss_and_grad(&model, &w, ex).unwrap().gradient);
        }
        mean_grad.scale(1.0 / client.clean_train.len() as f64);
        expected.axpy(-cfg.lr_intermediate, &mean_grad);
        assert!(w_n.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn client_update_errors() {
        let ds = gen_toy(1, 0).unwrap();
        let model = ModelSpec::logistic_binary(2);
        let cfg = toy_cfg();
        let client = client_from(&ds, 0, ParamVector::zeros(4));
        assert!(matches!(
            client_update(&client, &ParamVector::zeros(3), &model, &cfg, None, 1),
            Err(Error::LengthMismatch { .. })
        ));
        let mut empty = client_from(&ds, 1, ParamVector::zeros(3));
        empty.clean_train.clear();
        assert!(matches!(
            client_update(&empty, &ParamVector::zeros(3), &model, &cfg, None, 1),
            Err(Error::EmptyTrainingShard(1))
        ));
    }

    #[test]
    fn server_mean_and_convergence() {
        let models = [ParamVector::new(vec![1.0, 0.0]), ParamVector::new(vec![3.0, 2.0])];
        let mut cfg = toy_cfg();
        cfg.server_epochs = 200;
        let w = server_update(&ParamVector::zeros(2), &models, &cfg).unwrap();
        assert!(w.max_abs_diff(&[2.0, 1.0]) < 1e-4);
        cfg.aggregation = ServerAggregation::AnalyticMean;
        assert_eq!(
            server_update(&ParamVector::zeros(2), &models, &cfg).unwrap().as_slice(),
            &[2.0, 1.0]
        );
        cfg.tilt.q = 1.0;
        assert!(server_update(&ParamVector::zeros(2), &models, &cfg).is_err());
        assert!(matches!(
            server_update(&ParamVector::zeros(2), &[], &cfg),
            Err(Error::EmptyModelSet)
        ));
    }

    #[test]
    fn single_model_is_attractor() {
        let m = ParamVector::new(vec![0.5, -1.5, 2.0]);
        let mut cfg = toy_cfg();
        cfg.server_epochs = 200;
        for q in [-1.0, 0.0, 0.5] {
            cfg.tilt.q = q;
            let w = server_update(&ParamVector::zeros(3), std::slice::from_ref(&m), &cfg).unwrap();
            assert!(w.max_abs_diff(&m) < 1e-4, "q={q}");
        }
    }

    #[test]
    fn zero_rounds_returns_initial_model() {
        let ds = gen_toy(1, 0).unwrap();
        let model = ModelSpec::logistic_binary(2);
        let mut cfg = toy_cfg();
        cfg.global_rounds = 0;
        let out = run(&ds, &model, &cfg, None).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.global, initial_model(&model, cfg.seed));
    }

    #[test]
    fn full_participation_selects_everyone() {
        let ds = gen_toy(1, 0).unwrap();
        let model = ModelSpec::logistic_binary(2);
        let cfg = toy_cfg();
        let mut seen = Vec::new();
        run_with(&ds, &model, &cfg, None, |s| seen.push(s.selected.to_vec())).unwrap();
        assert_eq!(seen, vec![vec![0, 1]; 3]);
    }

    #[test]
    fn run_rejects_client_count_mismatch() {
        let ds = gen_toy(1, 0).unwrap();
        let model = ModelSpec::logistic_binary(2);
        let mut cfg = toy_cfg();
        cfg.num_clients = 3;
        assert!(matches!(run(&ds, &model, &cfg, None), Err(Error::InvalidConfig(_))));
    }
}
