//! Deterministic federated-learning simulator built around tilted losses.
//!
//! Clients train personalized models on a two-level (class, client) tilted
//! loss with a proximal tie to the global model; the server aggregates by
//! minimizing a tilted loss over client-model distances. FedAvg, FedProx and
//! Ditto are provided as independent reference implementations.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod params;
pub mod protocol;
pub mod seed;
pub mod tilt;
pub mod verify;

pub use error::{Error, Result};
pub use params::ParamVector;
