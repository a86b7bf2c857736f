//! Test-loss gap between the trained network and its frozen-kernel
//! linearization from the same initialization.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::gd::{train_full, TrainOptions};
use super::linear::evolve_linear;
use super::trajectory::Trajectory;
use super::{Split, TrainError};
use crate::nn::{forward, ntk_from_sensitivities, sensitivity, KernelMatrix, NetworkState};

/// Full and linear trajectories of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedGap {
    pub full: Trajectory,
    pub linear: Trajectory,
}

/// Train the network and its linearization for `horizon` steps from `state`.
pub fn gap_seed(
    state: NetworkState,
    train: &Split,
    test: &Split,
    lr: f64,
    horizon: usize,
    record_stride: usize,
) -> Result<SeedGap, TrainError> {
    let st: Vec<_> = train.inputs.iter().map(|x| sensitivity(&state, x)).collect::<Result<_, _>>()?;
    let se: Vec<_> = test.inputs.iter().map(|x| sensitivity(&state, x)).collect::<Result<_, _>>()?;
    let k_tt = KernelMatrix::square(train.len(), ntk_from_sensitivities(&state, &st, None));
    let k_et = KernelMatrix::new(
        (0..test.len()).collect(),
        (0..train.len()).collect(),
        ntk_from_sensitivities(&state, &se, Some(&st)),
    );
    drop((st, se));
    let f0: Vec<f64> = forward(&state, &train.inputs)?;
    let g0: Vec<f64> = forward(&state, &test.inputs)?;
    let linear = evolve_linear(&k_tt, &k_et, &f0, &g0, &train.labels, &test.labels, lr, horizon, record_stride)?;
    let opts = TrainOptions { max_steps: horizon, record_stride, ..TrainOptions::default() };
    let full = train_full(state, train, test, &[], lr, &opts)?.trajectory;
    Ok(SeedGap { full, linear })
}

/// Seed-averaged test losses and accuracies of both models at one width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub width: usize,
    pub steps: Vec<usize>,
    pub full_test_loss: Vec<f64>,
    pub linear_test_loss: Vec<f64>,
    pub full_test_accuracy: Vec<f64>,
    pub linear_test_accuracy: Vec<f64>,
    pub seeds: usize,
    pub excluded: usize,
}

impl GapSeries {
    /// Average over seeds that did not diverge, then difference.
    pub fn aggregate(width: usize, runs: &[SeedGap]) -> Self {
        let kept: Vec<&SeedGap> = runs.iter().filter(|r| !r.full.diverged && !r.linear.diverged).collect();
        let steps: Vec<usize> = kept
            .first()
            .map(|r| {
                r.full.records.iter().map(|x| x.step).filter(|s| r.linear.at(*s).is_some()).collect()
            })
            .unwrap_or_default();
        let avg = |pick: &dyn Fn(&SeedGap, usize) -> f64| -> Vec<f64> {
            steps.iter().map(|&s| kept.iter().map(|r| pick(r, s)).sum::<f64>() / kept.len() as f64).collect()
        };
        Self {
            width,
            full_test_loss: avg(&|r, s| r.full.at(s).expect("logged").test_loss),
            linear_test_loss: avg(&|r, s| r.linear.at(s).expect("logged").test_loss),
            full_test_accuracy: avg(&|r, s| r.full.at(s).expect("logged").test_accuracy),
            linear_test_accuracy: avg(&|r, s| r.linear.at(s).expect("logged").test_accuracy),
            steps,
            seeds: kept.len(),
            excluded: runs.len() - kept.len(),
        }
    }

    /// `E[L_test] - E[L_test^lin]` per logged step.
    pub fn loss_gap(&self) -> Vec<f64> {
        self.full_test_loss.iter().zip(&self.linear_test_loss).map(|(a, b)| a - b).collect()
    }

    pub fn accuracy_gap(&self) -> Vec<f64> {
        self.full_test_accuracy.iter().zip(&self.linear_test_accuracy).map(|(a, b)| a - b).collect()
    }

    /// Logged step with the lowest seed-averaged full-model test loss.
    pub fn early_stopping_step(&self) -> Option<usize> {
        self.full_test_loss
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.steps[i])
    }

    pub fn gap_at(&self, step: usize) -> Option<f64> {
        self.steps.iter().position(|&s| s == step).map(|i| self.full_test_loss[i] - self.linear_test_loss[i])
    }
}
