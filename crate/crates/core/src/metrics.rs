//! Test accuracy, client fairness and client-data fairness.
//!
//! Client fairness is the population standard deviation of per-client test
//! accuracies. Client-data fairness summarizes, for every client, the
//! population standard deviation of its per-class accuracies: `mu_sigma` is
//! their mean over clients and `sigma_sigma` their standard deviation.

use serde::{Deserialize, Serialize};

use crate::data::{Example, FederatedDataset};
use crate::error::{Error, Result};
use crate::models::{predict, ModelSpec};
use crate::params::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub round: usize,
    pub mean_test_acc_personalized: f64,
    pub mean_test_acc_global: f64,
    pub client_fairness_sigma: f64,
    pub data_fairness_mu_sigma: f64,
    pub data_fairness_sigma_sigma: f64,
    pub per_client_acc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub report: FairnessReport,
    /// Global tilted loss of the round's aggregated model.
    pub global_objective: f64,
    /// Mean local objective over the round's participating clients.
    pub mean_local_objective: f64,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn correct(spec: &ModelSpec, params: &[f64], ex: &Example) -> Result<bool> {
    Ok(predict(spec, params, &ex.features)? == ex.label)
}

/// Percentage of correctly classified examples.
pub fn client_accuracy(params: &[f64], spec: &ModelSpec, shard: &[Example]) -> Result<f64> {
    if shard.is_empty() {
        return Err(Error::EmptyTestShard);
    }
    let mut hits = 0usize;
    for ex in shard {
        hits += usize::from(correct(spec, params, ex)?);
    }
    Ok(100.0 * hits as f64 / shard.len() as f64)
}

/// Accuracy restricted to each class present in the shard, in label order.
pub fn per_class_accuracy(params: &[f64], spec: &ModelSpec, shard: &[Example]) -> Result<Vec<(usize, f64)>> {
    if shard.is_empty() {
        return Err(Error::EmptyTestShard);
    }
    let mut totals = vec![(0usize, 0usize); spec.num_classes];
    for ex in shard {
        let hit = correct(spec, params, ex)?;
        let entry = &mut totals[ex.label];
        entry.0 += usize::from(hit);
        entry.1 += 1;
    }
    Ok(totals
        .into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(k, (hits, n))| (k, 100.0 * hits as f64 / n as f64))
        .collect())
}

/// Fairness summary from already computed per-client and per-class accuracies.
pub fn summarize(
    round: usize,
    per_client_acc: Vec<f64>,
    per_client_class_acc: &[Vec<f64>],
    mean_test_acc_global: f64,
) -> FairnessReport {
    let (mean, sigma) = mean_std(&per_client_acc);
    let class_sigmas: Vec<f64> = per_client_class_acc.iter().map(|accs| mean_std(accs).1).collect();
    let (mu_sigma, sigma_sigma) = mean_std(&class_sigmas);
    FairnessReport {
        round,
        mean_test_acc_personalized: mean,
        mean_test_acc_global,
        client_fairness_sigma: sigma,
        data_fairness_mu_sigma: mu_sigma,
        data_fairness_sigma_sigma: sigma_sigma,
        per_client_acc,
    }
}

/// Evaluates personalized models on their clients' test shards and the global
/// model on the union of all test shards.
pub fn fairness_report(
    personalized: &[ParamVector],
    spec: &ModelSpec,
    dataset: &FederatedDataset,
    global: &ParamVector,
    round: usize,
) -> Result<FairnessReport> {
    if personalized.len() != dataset.num_clients() {
        return Err(Error::LengthMismatch {
            expected: dataset.num_clients(),
            actual: personalized.len(),
        });
    }
    let mut per_client_acc = Vec::with_capacity(personalized.len());
    let mut per_class = Vec::with_capacity(personalized.len());
    for (id, (params, client)) in personalized.iter().zip(&dataset.clients).enumerate() {
        per_client_acc.push(client_accuracy(params, spec, &client.test)?);
        let classes = per_class_accuracy(params, spec, &client.test)?;
        if classes.len() < 2 {
            log::warn!("client {id} test shard holds a single class; its class-accuracy spread is 0");
        }
        per_class.push(classes.into_iter().map(|(_, a)| a).collect::<Vec<_>>());
    }
    let pooled: Vec<Example> = dataset.pooled_test().cloned().collect();
    let global_acc = client_accuracy(global, spec, &pooled)?;
    Ok(summarize(round, per_client_acc, &per_class, global_acc))
}
