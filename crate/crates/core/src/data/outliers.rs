use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Example;
use crate::error::{Error, Result};
use crate::seed::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutlierKind {
    /// Adds `N(mean, std²)` to every feature of the selected samples.
    GaussianNoise {
        mean: f64,
        std: f64,
        sample_fraction: f64,
        /// Restrict selection to samples of this label.
        #[serde(default)]
        target_class: Option<usize>,
    },
    /// Replaces `pixel_fraction` of the coordinates of the selected samples
    /// with uniform values in `[0, 1]`.
    PixelCorruption { pixel_fraction: f64, sample_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub kind: OutlierKind,
    /// Draw a fresh corrupted subset every round. When false, every round
    /// sees the same corruption.
    pub persistent: bool,
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidOutlierSpec(format!("{name} must be in [0, 1], got {f}")));
    }
    Ok(())
}

impl OutlierSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            OutlierKind::GaussianNoise {
                mean,
                std,
                sample_fraction,
                ..
            } => {
                if !mean.is_finite() || !(std.is_finite() && std > 0.0) {
                    return Err(Error::InvalidOutlierSpec(format!(
                        "gaussian noise needs finite mean and positive std, got ({mean}, {std})"
                    )));
                }
                check_fraction("sample_fraction", sample_fraction)
            }
            OutlierKind::PixelCorruption {
                pixel_fraction,
                sample_fraction,
            } => {
                check_fraction("pixel_fraction", pixel_fraction)?;
                check_fraction("sample_fraction", sample_fraction)
            }
        }
    }
}

fn floor_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).floor() as usize).min(n)
}

/// Returns a corrupted copy of a clean shard. The affected subset is drawn
/// from a stream keyed by `(seed, round)`; corruption never accumulates
/// across rounds because the input shard is left untouched.
pub fn inject_outliers(shard: &[Example], spec: &OutlierSpec, round: u64, seed: u64) -> Result<Vec<Example>> {
    spec.validate()?;
    let round = if spec.persistent { round } else { 0 };
    let mut rng = seed::rng(&[seed, tag::OUTLIERS, round]);
    let mut out = shard.to_vec();
    match spec.kind {
        OutlierKind::GaussianNoise {
            mean,
            std,
            sample_fraction,
            target_class,
        } => {
            let candidates: Vec<usize> = shard
                .iter()
                .enumerate()
                .filter(|(_, e)| target_class.is_none_or(|k| e.label == k))
                .map(|(i, _)| i)
                .collect();
            let amount = floor_count(sample_fraction, candidates.len());
            let noise = Normal::new(mean, std).expect("validated");
            let mut chosen = index::sample(&mut rng, candidates.len(), amount).into_vec();
            chosen.sort_unstable();
            for c in chosen {
                for v in &mut out[candidates[c]].features {
                    *v += noise.sample(&mut rng);
                }
            }
        }
        OutlierKind::PixelCorruption {
            pixel_fraction,
            sample_fraction,
        } => {
            let amount = floor_count(sample_fraction, shard.len());
            let mut chosen = index::sample(&mut rng, shard.len(), amount).into_vec();
            chosen.sort_unstable();
            for i in chosen {
                let features = &mut out[i].features;
                let pixels = floor_count(pixel_fraction, features.len());
                let mut coords = index::sample(&mut rng, features.len(), pixels).into_vec();
                coords.sort_unstable();
                for j in coords {
                    features[j] = rng.random::<f64>();
                }
            }
        }
    }
    Ok(out)
}
