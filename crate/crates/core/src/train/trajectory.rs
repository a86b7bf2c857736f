use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::nn::KernelMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Full,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Logged metrics of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: ModelKind,
    pub records: Vec<StepRecord>,
    /// Probe-grid kernels at the snapshot steps.
    pub snapshots: Vec<(usize, KernelMatrix)>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn new(model: ModelKind) -> Self {
        Self { model, records: Vec::new(), snapshots: Vec::new(), diverged: false }
    }

    pub fn at(&self, step: usize) -> Option<&StepRecord> {
        self.records.iter().find(|r| r.step == step)
    }

    /// Steps whose train loss exceeds the previous record's.
    pub fn loss_increases(&self) -> Vec<usize> {
        self.records.windows(2).filter(|w| w[1].train_loss > w[0].train_loss).map(|w| w[1].step).collect()
    }

    pub fn losses(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.step, r.train_loss)).collect()
    }
}

/// `1/2 sum (f - y)^2`.
pub fn train_loss(f: &[f64], y: &[f64]) -> f64 {
    0.5 * f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// `mean 1/2 (f - y)^2`; 0 for an empty split.
pub fn test_loss(f: &[f64], y: &[f64]) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    train_loss(f, y) / f.len() as f64
}

/// Fraction of examples with `sign(f) == y`; `f = 0` counts as wrong.
pub fn accuracy(f: &[f64], y: &[f64]) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    let hits = f.iter().zip(y).filter(|(a, b)| (**a > 0.0 && **b > 0.0) || (**a < 0.0 && **b < 0.0)).count();
    hits as f64 / f.len() as f64
}
