use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::trajectory::{accuracy, test_loss, train_loss, ModelKind, StepRecord, Trajectory};
use super::{Split, TrainError};
use crate::math;
use crate::nn::{forward, loss_gradient, ntk_gram, KernelMatrix, NetworkState};
use crate::tensor::Image;

/// Largest eigenvalue of a symmetric PSD kernel by power iteration on the
/// Rayleigh quotient.
pub fn lambda_max(kernel: &KernelMatrix) -> Result<f64, TrainError> {
    if kernel.n_rows() != kernel.n_cols() {
        return Err(TrainError::NotSquare);
    }
    let n = kernel.n_rows();
    if n == 0 {
        return Err(TrainError::ZeroKernel);
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * i as f64).collect();
    let norm = math::sqrt(math::dot(&v, &v));
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = kernel.apply(&v);
        let next = math::dot(&v, &w);
        let wn = math::sqrt(math::dot(&w, &w));
        if wn == 0.0 {
            return Err(TrainError::ZeroKernel);
        }
        v = w.into_iter().map(|x| x / wn).collect();
        let done = math::abs(next - lambda) <= 1e-14 * math::abs(next);
        lambda = next;
        if done {
            break;
        }
    }
    if !(lambda > 0.0) {
        return Err(TrainError::ZeroKernel);
    }
    Ok(lambda)
}

/// `0.25 / lambda_max`.
pub fn stability_lr(kernel: &KernelMatrix) -> Result<f64, TrainError> {
    Ok(0.25 / lambda_max(kernel)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StepCap,
    FullAccuracy,
    LossThreshold,
    Diverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    /// Last step index that may be reached.
    pub max_steps: usize,
    pub stop_at_full_accuracy: bool,
    pub loss_threshold: Option<f64>,
    /// Log metrics every `record_stride` steps (and at the final step).
    pub record_stride: usize,
    /// Probe kernel every `snapshot_stride` steps, if set.
    pub snapshot_stride: Option<usize>,
    /// Step index of the incoming state, for resumed runs.
    pub step_offset: usize,
    pub divergence_loss: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_steps: 1000,
            stop_at_full_accuracy: false,
            loss_threshold: None,
            record_stride: 1,
            snapshot_stride: None,
            step_offset: 0,
            divergence_loss: 1e6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub trajectory: Trajectory,
    pub state: NetworkState,
    /// Step index of `state`.
    pub final_step: usize,
    pub stop: StopReason,
}

/// Full-batch gradient descent on `1/2 sum (f - y)^2`.
pub fn train_full(
    mut state: NetworkState,
    train: &Split,
    test: &Split,
    probe: &[Image],
    lr: f64,
    opts: &TrainOptions,
) -> Result<TrainRun, TrainError> {
    let mut traj = Trajectory::new(ModelKind::Full);
    let mut step = opts.step_offset;
    let stride = opts.record_stride.max(1);
    loop {
        let (f, grad) = loss_gradient(&state, &train.inputs, &train.labels)?;
        let loss = train_loss(&f, &train.labels);
        let acc = accuracy(&f, &train.labels);
        let diverged = !loss.is_finite() || loss > opts.divergence_loss;
        let stop = if diverged {
            Some(StopReason::Diverged)
        } else if opts.stop_at_full_accuracy && acc == 1.0 {
            Some(StopReason::FullAccuracy)
        } else if opts.loss_threshold.is_some_and(|t| loss <= t) {
            Some(StopReason::LossThreshold)
        } else if step >= opts.max_steps {
            Some(StopReason::StepCap)
        } else {
            None
        };
        if step % stride == 0 || stop.is_some() {
            let ft = forward(&state, &test.inputs)?;
            traj.records.push(StepRecord {
                step,
                train_loss: loss,
                train_accuracy: acc,
                test_loss: test_loss(&ft, &test.labels),
                test_accuracy: accuracy(&ft, &test.labels),
            });
        }
        if let Some(every) = opts.snapshot_stride {
            if !probe.is_empty() && step % every.max(1) == 0 && !diverged {
                traj.snapshots.push((step, ntk_gram(&state, probe)?));
            }
        }
        if let Some(reason) = stop {
            traj.diverged = reason == StopReason::Diverged;
            return Ok(TrainRun { trajectory: traj, state, final_step: step, stop: reason });
        }
        state.descend(&grad, lr);
        step += 1;
    }
}
