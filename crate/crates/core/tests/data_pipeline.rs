use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedtilt::data::{gen_image_like, gen_toy, inject_outliers, load_idx, partition_noniid, OutlierKind, OutlierSpec};
use fedtilt::models::Example;
use fedtilt::Error;
use proptest::prelude::*;

fn idx_images(dir: &Path, count: u32, rows: u32, cols: u32, pixels: &[u8]) -> PathBuf {
    let path = dir.join("images.idx3");
    let mut f = std::fs::File::create(&path).unwrap();
    for word in [0x0803u32, count, rows, cols] {
        f.write_all(&word.to_be_bytes()).unwrap();
    }
    f.write_all(pixels).unwrap();
    path
}

fn idx_labels(dir: &Path, labels: &[u8]) -> PathBuf {
    let path = dir.join("labels.idx1");
    let mut f = std::fs::File::create(&path).unwrap();
    for word in [0x0801u32, labels.len() as u32] {
        f.write_all(&word.to_be_bytes()).unwrap();
    }
    f.write_all(labels).unwrap();
    path
}

#[test]
fn idx_pixels_are_scaled() {
    let dir = tempfile::tempdir().unwrap();
    let images = idx_images(dir.path(), 1, 2, 2, &[0, 255, 128, 64]);
    let labels = idx_labels(dir.path(), &[7]);
    let data = load_idx(&images, &labels).unwrap();
    assert_eq!(data.len(), 1);
    assert_eq!(data[0].label, 7);
    assert_eq!(data[0].features, vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
}

#[test]
fn idx_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let images = idx_images(dir.path(), 2, 1, 1, &[1, 2]);
    let labels = idx_labels(dir.path(), &[0, 1, 1]);
    let err = load_idx(&images, &labels).unwrap_err();
    assert!(matches!(err, Error::CountMismatch { images: 2, labels: 3 }));
    assert!(err.to_string().contains("label/image count mismatch"));
}

#[test]
fn idx_header_errors() {
    let dir = tempfile::tempdir().unwrap();
    let labels = idx_labels(dir.path(), &[0; 20]);
    // Label file passed as images: wrong magic.
    assert!(matches!(
        load_idx(&labels, &labels),
        Err(Error::BadMagic { found: 0x0801, .. })
    ));
    let short = idx_images(dir.path(), 2, 2, 2, &[0; 5]);
    let two = idx_labels(dir.path(), &[0, 1]);
    assert!(matches!(load_idx(&short, &two), Err(Error::Truncated { .. })));
    match load_idx(dir.path().join("absent"), &two) {
        Err(Error::Io { path, .. }) => assert!(path.ends_with("absent")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn official_mnist_train_file_if_present() {
    let dir = std::env::var("FEDTILT_MNIST_DIR").unwrap_or_else(|_| "data/mnist".into());
    let images = Path::new(&dir).join("train-images-idx3-ubyte");
    let labels = Path::new(&dir).join("train-labels-idx1-ubyte");
    if !images.exists() || !labels.exists() {
        eprintln!("MNIST files not found under {dir}; skipping");
        return;
    }
    let data = load_idx(&images, &labels).unwrap();
    assert_eq!(data.len(), 60_000);
    assert_eq!(data[0].features.len(), 784);
}

fn key(e: &Example) -> (usize, Vec<u64>) {
    (e.label, e.features.iter().map(|x| x.to_bits()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn partition_is_disjoint_cover(seed in any::<u64>(), clients in 2usize..12, cpc in 1usize..4) {
        let classes = 4;
        prop_assume!(clients * cpc >= classes);
        let pool = gen_image_like(classes, 3, 60, 0.2, seed).unwrap();
        let ds = partition_noniid(&pool, clients, cpc, seed).unwrap();
        let mut want: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
        for e in &pool {
            *want.entry(key(e)).or_default() += 1;
        }
        let mut got: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
        for c in &ds.clients {
            prop_assert!(!c.train.is_empty() && !c.test.is_empty());
            for e in c.train.iter().chain(&c.test) {
                *got.entry(key(e)).or_default() += 1;
            }
        }
        prop_assert_eq!(want, got);
    }
}

#[test]
fn partition_and_generators_are_deterministic() {
    let a = gen_image_like(5, 8, 30, 0.3, 9).unwrap();
    let b = gen_image_like(5, 8, 30, 0.3, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        partition_noniid(&a, 6, 2, 1).unwrap(),
        partition_noniid(&b, 6, 2, 1).unwrap()
    );
    assert_ne!(
        partition_noniid(&a, 6, 2, 1).unwrap(),
        partition_noniid(&a, 6, 2, 2).unwrap()
    );
    assert_eq!(gen_toy(3, 4).unwrap(), gen_toy(3, 4).unwrap());
}

#[test]
fn toy_three_noise_hits_only_target_class() {
    let ds = gen_toy(3, 0).unwrap();
    let spec = OutlierSpec {
        kind: OutlierKind::GaussianNoise {
            mean: 0.0,
            std: 0.15,
            sample_fraction: 0.1,
            target_class: Some(0),
        },
        persistent: true,
    };
    let shard = &ds.clients[0].train;
    let out = inject_outliers(shard, &spec, 1, 5).unwrap();
    let changed: Vec<&Example> = shard.iter().zip(&out).filter(|(a, b)| a != b).map(|(a, _)| a).collect();
    assert_eq!(changed.len(), 15);
    assert!(changed.iter().all(|e| e.label == 0));
}

#[test]
fn pixel_corruption_of_784_pixel_images() {
    let shard: Vec<Example> = (0..100).map(|i| Example::new(vec![2.0; 784], i % 10)).collect();
    let spec = OutlierSpec {
        kind: OutlierKind::PixelCorruption {
            pixel_fraction: 0.3,
            sample_fraction: 0.3,
        },
        persistent: true,
    };
    let out = inject_outliers(&shard, &spec, 3, 1).unwrap();
    let altered: Vec<usize> = out
        .iter()
        .map(|e| e.features.iter().filter(|&&x| x != 2.0).count())
        .filter(|&n| n > 0)
        .collect();
    assert_eq!(altered.len(), 30);
    assert!(altered.iter().all(|&n| n == 235));
}
