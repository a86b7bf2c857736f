//! Per-seed observables for the width sweeps. Aggregation across seeds and
//! widths happens in the caller; every function here is a pure function of
//! its arguments.

use alloc::vec::Vec;

use crate::math;
use crate::nn::{loss_gradient, ntk_gram, KernelMatrix, NetworkState};
use crate::tensor::Image;
use crate::train::{
    drift_series, lambda_max, train_full, StopReason, Split, TrainError, TrainOptions, TrainRun,
};

/// Mean of `|values|`.
pub fn mean_abs(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| math::abs(*v)).sum::<f64>() / values.len() as f64
}

/// Per-seed samples whose seed averages equal the grid mean of `|E[Theta]|`
/// and of the unbiased across-seed variance of each entry.
///
/// Mean samples are `mean_e sign(mean_k Theta_ke) Theta_ke`; variance samples
/// are `mean_e N/(N-1) (Theta_ke - mean_k Theta_ke)^2`.
pub fn ntk_stat_samples(kernels: &[KernelMatrix]) -> (Vec<f64>, Vec<f64>) {
    let n = kernels.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let entries = kernels[0].values.len();
    let mut centre = alloc::vec![0.0; entries];
    for k in kernels {
        centre.iter_mut().zip(&k.values).for_each(|(c, v)| *c += v);
    }
    centre.iter_mut().for_each(|c| *c /= n as f64);
    let bessel = if n > 1 { n as f64 / (n as f64 - 1.0) } else { f64::NAN };
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    for k in kernels {
        let mut m = 0.0;
        let mut v = 0.0;
        for (c, x) in centre.iter().zip(&k.values) {
            m += if *c < 0.0 { -x } else { *x };
            v += (x - c) * (x - c);
        }
        means.push(m / entries as f64);
        vars.push(bessel * v / entries as f64);
    }
    (means, vars)
}

/// One-sided finite difference of the probe kernel along the gradient-descent
/// direction, reduced to the mean absolute entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dtheta {
    pub value: f64,
    pub eta: f64,
    pub lambda_max: f64,
}

/// `(Theta(theta - eta grad L) - Theta(theta)) / eta` with
/// `eta = fd_step * 0.25 / lambda_max(Theta_train)`. An empty `probe` means
/// the train set.
pub fn dtheta_dt0(state: &NetworkState, train: &Split, probe: &[Image], fd_step: f64) -> Result<Dtheta, TrainError> {
    let k_train = ntk_gram(state, &train.inputs)?;
    let lambda = lambda_max(&k_train)?;
    let eta = fd_step * 0.25 / lambda;
    let before = if probe.is_empty() { k_train } else { ntk_gram(state, probe)? };
    let (_, grad) = loss_gradient(state, &train.inputs, &train.labels)?;
    let mut moved = state.clone();
    moved.descend(&grad, eta);
    let probe = if probe.is_empty() { &train.inputs[..] } else { probe };
    let after = ntk_gram(&moved, probe)?;
    let diff: Vec<f64> = after.values.iter().zip(&before.values).map(|(a, b)| (a - b) / eta).collect();
    Ok(Dtheta { value: mean_abs(&diff), eta, lambda_max: lambda })
}

/// First phase of a drift measurement: train from `state` at the stability
/// learning rate until full train accuracy or the step cap.
#[derive(Clone, Debug)]
pub struct DriftRun {
    pub theta0: KernelMatrix,
    pub lr: f64,
    pub run: TrainRun,
    /// Step of first full train accuracy, if reached.
    pub reached: Option<usize>,
}

pub struct DriftOptions {
    pub step_cap: usize,
    pub snapshot_stride: usize,
    /// Learning rate as a multiple of `0.25 / lambda_max`...
    pub lr_factor: f64,
    /// ...unless fixed here.
    pub fixed_lr: Option<f64>,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self { step_cap: 20_000, snapshot_stride: 10, lr_factor: 1.0, fixed_lr: None }
    }
}

pub fn drift_start(state: NetworkState, train: &Split, probe: &[Image], opts: &DriftOptions) -> Result<DriftRun, TrainError> {
    let probe = if probe.is_empty() { &train.inputs[..] } else { probe };
    let theta0 = ntk_gram(&state, probe)?;
    let lr = match opts.fixed_lr {
        Some(lr) => lr,
        None => opts.lr_factor * 0.25 / lambda_max(&ntk_gram(&state, &train.inputs)?)?,
    };
    let empty = Split { inputs: Vec::new(), labels: Vec::new() };
    let train_opts = TrainOptions {
        max_steps: opts.step_cap,
        stop_at_full_accuracy: true,
        snapshot_stride: Some(opts.snapshot_stride),
        record_stride: opts.snapshot_stride,
        ..TrainOptions::default()
    };
    let run = train_full(state, train, &empty, probe, lr, &train_opts)?;
    let reached = (run.stop == StopReason::FullAccuracy).then_some(run.final_step);
    Ok(DriftRun { theta0, lr, run, reached })
}

/// Result of a drift measurement at a common step.
#[derive(Clone, Debug, PartialEq)]
pub struct Drift {
    pub value: f64,
    pub step: usize,
    pub reached: Option<usize>,
    pub diverged: bool,
    /// Inter-snapshot drifts along the whole run, for instability checks.
    pub drifts: Vec<(usize, f64)>,
    pub losses: Vec<(usize, f64)>,
}

/// Continue `start` to step `until` and return `mean |Theta(until) - Theta(0)|`.
pub fn drift_finish(start: DriftRun, train: &Split, probe: &[Image], until: usize, snapshot_stride: usize) -> Result<Drift, TrainError> {
    let probe = if probe.is_empty() { &train.inputs[..] } else { probe };
    let DriftRun { theta0, lr, run, reached } = start;
    let mut snapshots = run.trajectory.snapshots;
    let mut losses: Vec<(usize, f64)> = run.trajectory.records.iter().map(|r| (r.step, r.train_loss)).collect();
    let mut state = run.state;
    let mut step = run.final_step;
    let mut diverged = run.trajectory.diverged;
    if until > step && !diverged {
        let empty = Split { inputs: Vec::new(), labels: Vec::new() };
        let opts = TrainOptions {
            max_steps: until,
            step_offset: step,
            snapshot_stride: Some(snapshot_stride),
            record_stride: snapshot_stride,
            ..TrainOptions::default()
        };
        let more = train_full(state, train, &empty, probe, lr, &opts)?;
        diverged = more.trajectory.diverged;
        for s in more.trajectory.snapshots {
            if snapshots.last().is_none_or(|l| l.0 < s.0) {
                snapshots.push(s);
            }
        }
        for r in more.trajectory.records {
            if losses.last().is_none_or(|l| l.0 < r.step) {
                losses.push((r.step, r.train_loss));
            }
        }
        state = more.state;
        step = more.final_step;
    }
    let now = ntk_gram(&state, probe)?;
    Ok(Drift {
        value: now.mean_abs_diff(&theta0),
        step,
        reached,
        diverged,
        drifts: drift_series(&snapshots),
        losses,
    })
}
