use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ClientData, Example, FederatedDataset};
use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// One isotropic Gaussian blob of a toy client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGroupSpec {
    pub center: (f64, f64),
    pub std_dev: f64,
    pub label: usize,
    pub count_train: usize,
    pub count_test: usize,
}

const fn group(center: (f64, f64), std_dev: f64, label: usize, train: usize, test: usize) -> GaussianGroupSpec {
    GaussianGroupSpec {
        center,
        std_dev,
        label,
        count_train: train,
        count_test: test,
    }
}

/// Per-client group layout of the three two-client toy experiments.
///
/// Group 1 carries label 0 and group 2 label 1. Experiment 1 is balanced
/// (100/20 per class); experiments 2 and 3 use a 3:1 class ratio (150/50
/// train, 30/10 test).
pub fn toy_groups(experiment: u32) -> Result<[[GaussianGroupSpec; 2]; 2]> {
    Ok(match experiment {
        1 => [
            [group((0.5, 2.0), 0.5, 0, 100, 20), group((2.5, 1.0), 0.5, 1, 100, 20)],
            [group((1.0, 2.2), 0.5, 0, 100, 20), group((2.2, 0.8), 0.5, 1, 100, 20)],
        ],
        2 => [
            [group((0.5, 2.0), 0.35, 0, 150, 30), group((2.0, 1.0), 0.25, 1, 50, 10)],
            [group((0.5, 2.0), 0.35, 0, 150, 30), group((2.5, 1.8), 0.25, 1, 50, 10)],
        ],
        3 => [
            [group((1.0, 2.0), 1.0, 0, 150, 30), group((2.5, 1.0), 0.3, 1, 50, 10)],
            [group((1.0, 2.0), 1.0, 0, 150, 30), group((2.5, 1.0), 0.3, 1, 50, 10)],
        ],
        other => return Err(Error::InvalidExperiment(other)),
    })
}

fn sample_group<R: Rng>(rng: &mut R, g: &GaussianGroupSpec, count: usize, out: &mut Vec<Example>) {
    let noise = Normal::new(0.0, g.std_dev).expect("positive std");
    for _ in 0..count {
        let x = g.center.0 + noise.sample(rng);
        let y = g.center.1 + noise.sample(rng);
        out.push(Example::new(vec![x, y], g.label));
    }
}

/// Two-client 2-D binary dataset for toy experiment 1, 2 or 3.
pub fn gen_toy(experiment: u32, seed: u64) -> Result<FederatedDataset> {
    let layout = toy_groups(experiment)?;
    let clients = layout
        .iter()
        .enumerate()
        .map(|(id, groups)| {
            let mut rng = seed::rng(&[seed, tag::TOY, experiment as u64, id as u64]);
            let mut train = Vec::new();
            let mut test = Vec::new();
            for g in groups {
                sample_group(&mut rng, g, g.count_train, &mut train);
                sample_group(&mut rng, g, g.count_test, &mut test);
            }
            ClientData { train, test }
        })
        .collect();
    Ok(FederatedDataset {
        clients,
        num_classes: 2,
        input_dim: 2,
    })
}

/// Pool of image-like examples with features in `[0, 1]`: every class has a
/// uniform random prototype, and examples are the prototype plus Gaussian
/// noise, clipped to the unit interval.
pub fn gen_image_like(
    num_classes: usize,
    input_dim: usize,
    per_class: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<Example>> {
    if num_classes == 0 || input_dim == 0 {
        return Err(Error::InvalidConfig(
            "synthetic data needs positive class count and dimension".into(),
        ));
    }
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidConfig(format!("noise std {noise_std}: {e}")))?;
    let mut rng = seed::rng(&[seed, tag::SYNTHETIC]);
    let prototypes: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..input_dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut pool = Vec::with_capacity(num_classes * per_class);
    for (label, proto) in prototypes.iter().enumerate() {
        for _ in 0..per_class {
            let features = proto
                .iter()
                .map(|p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            pool.push(Example::new(features, label));
        }
    }
    Ok(pool)
}
