use rand::seq::SliceRandom;

use super::{ClientData, Example, FederatedDataset};
use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// Fraction of each client's per-class chunk kept for training.
const TRAIN_FRACTION: f64 = 0.8;

/// Splits a labelled pool into `num_clients` shards holding exactly
/// `classes_per_client` distinct classes each.
///
/// Classes are shuffled once; client `c` takes the `classes_per_client`
/// consecutive classes starting at position `c·classes_per_client` (mod K),
/// so every class is held by the same number of clients whenever K divides
/// `num_clients·classes_per_client`. Each class's examples are shuffled and
/// dealt to its holders in near-equal contiguous chunks, and every chunk is
/// split 80/20 into train and test.
pub fn partition_noniid(
    pool: &[Example],
    num_clients: usize,
    classes_per_client: usize,
    seed: u64,
) -> Result<FederatedDataset> {
    let first = pool
        .first()
        .ok_or_else(|| Error::InvalidPartition("empty pool".into()))?;
    let input_dim = first.features.len();
    if let Some(bad) = pool.iter().find(|e| e.features.len() != input_dim) {
        return Err(Error::LengthMismatch {
            expected: input_dim,
            actual: bad.features.len(),
        });
    }
    let num_classes = pool.iter().map(|e| e.label).max().unwrap_or(0) + 1;
    if num_clients == 0 {
        return Err(Error::InvalidPartition("need at least one client".into()));
    }
    if classes_per_client == 0 || classes_per_client > num_classes {
        return Err(Error::InvalidPartition(format!(
            "classes_per_client must be in 1..={num_classes}, got {classes_per_client}"
        )));
    }

    let mut rng = seed::rng(&[seed, tag::PARTITION]);
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.shuffle(&mut rng);

    let client_classes: Vec<Vec<usize>> = (0..num_clients)
        .map(|c| {
            (0..classes_per_client)
                .map(|j| order[(c * classes_per_client + j) % num_classes])
                .collect()
        })
        .collect();

    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (c, classes) in client_classes.iter().enumerate() {
        for &k in classes {
            holders[k].push(c);
        }
    }

    let mut by_class: Vec<Vec<&Example>> = vec![Vec::new(); num_classes];
    for ex in pool {
        by_class[ex.label].push(ex);
    }

    let mut clients = vec![
        ClientData {
            train: Vec::new(),
            test: Vec::new(),
        };
        num_clients
    ];
    for class in 0..num_classes {
        let examples = &mut by_class[class];
        let owners = &holders[class];
        if owners.is_empty() {
            if examples.is_empty() {
                continue;
            }
            return Err(Error::InvalidPartition(format!("class {class} is held by no client")));
        }
        if examples.len() < 2 * owners.len() {
            return Err(Error::InsufficientClassData {
                class,
                available: examples.len(),
                holders: owners.len(),
            });
        }
        examples.shuffle(&mut rng);
        let base = examples.len() / owners.len();
        let extra = examples.len() % owners.len();
        let mut start = 0;
        for (i, &c) in owners.iter().enumerate() {
            let len = base + usize::from(i < extra);
            let chunk = &examples[start..start + len];
            start += len;
            let n_train = ((len as f64 * TRAIN_FRACTION).floor() as usize).clamp(1, len - 1);
            clients[c].train.extend(chunk[..n_train].iter().map(|e| (*e).clone()));
            clients[c].test.extend(chunk[n_train..].iter().map(|e| (*e).clone()));
        }
    }

    Ok(FederatedDataset {
        clients,
        num_classes,
        input_dim,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn pool(classes: usize, per_class: usize) -> Vec<Example> {
        (0..classes * per_class)
            .map(|i| Example::new(vec![i as f64], i % classes))
            .collect()
    }

    fn classes_of(c: &ClientData) -> BTreeSet<usize> {
        c.train.iter().chain(&c.test).map(|e| e.label).collect()
    }

    #[test]
    fn every_class_held_by_twenty_clients() {
        let ds = partition_noniid(&pool(10, 200), 100, 2, 4).unwrap();
        let mut counts = [0usize; 10];
        for c in &ds.clients {
            let cls = classes_of(c);
            assert_eq!(cls.len(), 2);
            for k in cls {
                counts[k] += 1;
            }
        }
        assert!(counts.iter().all(|&n| n == 20));
        ds.validate().unwrap();
    }

    #[test]
    fn all_classes_per_client() {
        let ds = partition_noniid(&pool(4, 40), 5, 4, 1).unwrap();
        assert!(ds.clients.iter().all(|c| classes_of(c).len() == 4));
    }

    #[test]
    fn eighty_twenty_split() {
        let ds = partition_noniid(&pool(2, 100), 2, 1, 0).unwrap();
        for c in &ds.clients {
            assert_eq!((c.train.len(), c.test.len()), (80, 20));
        }
    }

    #[test]
    fn starved_class_is_named() {
        let mut p = pool(3, 40);
        p.retain(|e| e.label != 1 || e.features[0] < 3.0);
        match partition_noniid(&p, 30, 1, 0) {
            Err(Error::InsufficientClassData { class: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(partition_noniid(&[], 2, 1, 0).is_err());
        assert!(partition_noniid(&pool(3, 10), 2, 4, 0).is_err());
        assert!(partition_noniid(&pool(3, 10), 0, 1, 0).is_err());
        // 1 client × 1 class leaves two classes without a holder.
        assert!(matches!(
            partition_noniid(&pool(3, 10), 1, 1, 0),
            Err(Error::InvalidPartition(_))
        ));
    }
}
