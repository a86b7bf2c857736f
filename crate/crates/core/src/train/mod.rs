//! Full-batch gradient descent, frozen-kernel linear evolution, loss-gap runs
//! and late-time instability detection.

mod gap;
mod gd;
mod instability;
mod linear;
mod trajectory;

use alloc::vec::Vec;
use thiserror::Error;

use crate::nn::NnError;
use crate::tensor::Image;

pub use gap::{gap_seed, GapSeries, SeedGap};
pub use gd::{lambda_max, stability_lr, train_full, StopReason, TrainOptions, TrainRun};
pub use instability::{detect_after_quiet, detect_instability, drift_series, median, InstabilityOptions};
pub use linear::evolve_linear;
pub use trajectory::{accuracy, test_loss, train_loss, ModelKind, StepRecord, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("kernel has no positive eigenvalue")]
    ZeroKernel,
    #[error("kernel must be square")]
    NotSquare,
    #[error("{inputs} inputs but {labels} labels")]
    LabelCount { inputs: usize, labels: usize },
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Inputs with `+-1` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub inputs: Vec<Image>,
    pub labels: Vec<f64>,
}

impl Split {
    pub fn new(inputs: Vec<Image>, labels: Vec<f64>) -> Result<Self, TrainError> {
        if inputs.len() != labels.len() {
            return Err(TrainError::LabelCount { inputs: inputs.len(), labels: labels.len() });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}
