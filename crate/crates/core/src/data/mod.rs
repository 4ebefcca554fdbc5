//! Datasets: synthetic toy and image-like generators, non-IID partitioning,
//! IDX file loading and outlier injection.

mod idx;
mod outliers;
mod partition;
mod synthetic;

pub use idx::load_idx;
pub use outliers::{inject_outliers, OutlierKind, OutlierSpec};
pub use partition::partition_noniid;
pub use synthetic::{gen_image_like, gen_toy, toy_groups, GaussianGroupSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::models::Example;

/// One client's local shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientData {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedDataset {
    pub clients: Vec<ClientData>,
    pub num_classes: usize,
    pub input_dim: usize,
}

impl FederatedDataset {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::InvalidPartition("dataset has no clients".into()));
        }
        for (id, client) in self.clients.iter().enumerate() {
            if client.train.is_empty() {
                return Err(Error::EmptyTrainingShard(id));
            }
            if client.test.is_empty() {
                return Err(Error::EmptyTestShard);
            }
            for ex in client.train.iter().chain(&client.test) {
                if ex.label >= self.num_classes {
                    return Err(Error::LabelOutOfRange {
                        label: ex.label,
                        num_classes: self.num_classes,
                    });
                }
                if ex.features.len() != self.input_dim {
                    return Err(Error::LengthMismatch {
                        expected: self.input_dim,
                        actual: ex.features.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// All test examples, client by client.
    pub fn pooled_test(&self) -> impl Iterator<Item = &Example> {
        self.clients.iter().flat_map(|c| c.test.iter())
    }
}
