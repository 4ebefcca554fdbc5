use std::path::PathBuf;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty loss set")]
    EmptyLossSet,
    #[error("invalid weight {weight} at index {index}")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("tilt must be finite, got {0}")]
    NonFiniteTilt(f64),
    #[error("empty class shard")]
    EmptyClassShard,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid model spec: {0}")]
    InvalidModel(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("invalid toy experiment id {0} (expected 1, 2 or 3)")]
    InvalidExperiment(u32),
    #[error("insufficient data for class {class}: {available} examples for {holders} clients")]
    InsufficientClassData {
        class: usize,
        available: usize,
        holders: usize,
    },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid outlier spec: {0}")]
    InvalidOutlierSpec(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("empty training shard for client {0}")]
    EmptyTrainingShard(usize),
    #[error("empty test shard")]
    EmptyTestShard,
    #[error("empty client model set")]
    EmptyModelSet,
    #[error("configuration not exactly comparable: {0}")]
    NotComparable(String),
    #[error("non-finite function value {value} at coordinate {coordinate}")]
    NonFiniteValue { coordinate: usize, value: f64 },
    #[error("non-positive gap {value} at index {index}")]
    NonPositiveGap { index: usize, value: f64 },
    #[error("need at least {needed} gaps, got {actual}")]
    TooFewGaps { needed: usize, actual: usize },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: truncated file ({actual} bytes, expected {expected})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("label/image count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
