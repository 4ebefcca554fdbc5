use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Flat vector of model parameters, the unit exchanged between clients and server.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &[f64]) {
        debug_assert_eq!(self.0.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `‖self − other‖²`
    pub fn squared_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `‖self − other‖∞`
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Element-wise mean of equally sized vectors. Summation runs in input order.
pub fn mean_of(vectors: &[ParamVector]) -> Option<ParamVector> {
    let first = vectors.first()?;
    let mut acc = ParamVector::zeros(first.len());
    for v in vectors {
        acc.axpy(1.0, v);
    }
    acc.scale(1.0 / vectors.len() as f64);
    Some(acc)
}
