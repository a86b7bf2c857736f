use serde::{Deserialize, Serialize};
use wideconv_core::fit::ScalingSeries;
use wideconv_core::nn::ntk_gram;
use wideconv_core::observe::{drift_finish, drift_start, dtheta_dt0, ntk_stat_samples, DriftOptions};
use wideconv_core::train::{detect_after_quiet, detect_instability, InstabilityOptions, Split, TrainError};
use wideconv_core::{Image, KernelMatrix};

use super::{architecture, init_state, par_tasks, ExperimentError, SeriesOutcome};
use crate::config::{ExperimentConfig, LrPolicy};
use crate::data::LoadedData;

pub(crate) const REDUCTION: &str = "mean |entry| over train x train probe grid";

fn probe(cfg: &ExperimentConfig, data: &LoadedData) -> Vec<Image> {
    let n = cfg.probe_examples.unwrap_or(data.train.len()).min(data.train.len());
    data.train.inputs()[..n].to_vec()
}

/// Keep finite samples; count the rest.
fn finite(per_width: Vec<Vec<Option<f64>>>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    for w in per_width {
        let kept: Vec<f64> = w.iter().flatten().copied().filter(|v| v.is_finite()).collect();
        excluded.push(w.len() - kept.len());
        samples.push(kept);
    }
    (samples, excluded)
}

fn outcome(cfg: &ExperimentConfig, name: &str, reduction: &str, samples: Vec<Vec<f64>>, excluded: Vec<usize>) -> Result<SeriesOutcome, ExperimentError> {
    // Unvalidated: a width whose seeds were all excluded surfaces as a fit error.
    let s = ScalingSeries {
        observable: name.into(),
        reduction: reduction.into(),
        widths: cfg.widths.clone(),
        samples,
        excluded,
    };
    Ok(SeriesOutcome::new(s, cfg.effective_fit_range()))
}

/// Across-seed mean and variance of the initial NTK on the probe grid.
pub fn measure_ntk_stats(cfg: &ExperimentConfig, data: &LoadedData) -> Result<(SeriesOutcome, SeriesOutcome), ExperimentError> {
    let spec = architecture(cfg)?;
    let probe = probe(cfg, data);
    let kernels = par_tasks(&cfg.widths, cfg.seeds, |w, k| -> Result<KernelMatrix, ExperimentError> {
        let st = init_state(spec, cfg.widths[w], cfg.root_seed, k)?;
        Ok(ntk_gram(&st, &probe)?)
    });
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for w in kernels {
        let ks: Vec<KernelMatrix> = w.into_iter().collect::<Result<_, _>>()?;
        let (m, v) = ntk_stat_samples(&ks);
        means.push(m);
        vars.push(v);
    }
    let zeros = vec![0; cfg.widths.len()];
    Ok((
        outcome(cfg, "ntk_mean", "sign-aligned mean over probe grid", means, zeros.clone())?,
        outcome(cfg, "ntk_variance", "mean over probe grid of unbiased across-seed variance", vars, zeros)?,
    ))
}

/// Finite-difference `dTheta/dt` at initialization.
pub fn measure_dtheta_dt0(cfg: &ExperimentConfig, data: &LoadedData) -> Result<SeriesOutcome, ExperimentError> {
    let spec = architecture(cfg)?;
    let probe = probe(cfg, data);
    let probe_ref: &[Image] = if probe.len() == data.train.len() { &[] } else { &probe };
    let per = par_tasks(&cfg.widths, cfg.seeds, |w, k| -> Result<Option<f64>, ExperimentError> {
        let st = init_state(spec, cfg.widths[w], cfg.root_seed, k)?;
        match dtheta_dt0(&st, &data.train.split, probe_ref, cfg.training.fd_step) {
            Ok(d) => Ok(Some(d.value)),
            Err(TrainError::ZeroKernel) => Ok(None),
            Err(e) => Err(e.into()),
        }
    });
    let per: Vec<Vec<Option<f64>>> = per.into_iter().map(|w| w.into_iter().collect::<Result<_, _>>()).collect::<Result<_, _>>()?;
    let (samples, excluded) = finite(per);
    outcome(cfg, "dtheta_dt0", REDUCTION, samples, excluded)
}

/// Per-seed bookkeeping of a drift run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftDetail {
    pub width: usize,
    pub seed_index: usize,
    pub reached: Option<usize>,
    pub measured_at: usize,
    #[serde(deserialize_with = "crate::persist::nullable::f64")]
    pub drift: f64,
    pub diverged: bool,
    pub instability: Option<usize>,
}

/// `mean |Theta(t*) - Theta(0)|` where `t*` is the first step at which every
/// seed of the width has reached full train accuracy.
pub fn measure_kernel_drift(
    cfg: &ExperimentConfig,
    data: &LoadedData,
) -> Result<(SeriesOutcome, Vec<DriftDetail>, Vec<String>), ExperimentError> {
    let spec = architecture(cfg)?;
    let probe = probe(cfg, data);
    let probe_ref: &[Image] = if probe.len() == data.train.len() { &[] } else { &probe };
    let train: &Split = &data.train.split;
    let (lr_factor, fixed_lr) = match cfg.lr {
        LrPolicy::Stability { factor } => (factor, None),
        LrPolicy::Fixed { value } => (1.0, Some(value)),
    };
    let opts = DriftOptions { step_cap: cfg.training.step_cap, snapshot_stride: cfg.training.snapshot_stride, lr_factor, fixed_lr };
    let starts = par_tasks(&cfg.widths, cfg.seeds, |w, k| {
        let st = init_state(spec, cfg.widths[w], cfg.root_seed, k)?;
        Ok::<_, ExperimentError>(drift_start(st, train, probe_ref, &opts)?)
    });
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    let mut details = Vec::new();
    let mut findings = Vec::new();
    let inst = InstabilityOptions::default();
    for (w, runs) in starts.into_iter().enumerate() {
        let width = cfg.widths[w];
        let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>()?;
        let t_star = runs.iter().map(|r| r.reached.unwrap_or(cfg.training.step_cap)).max().unwrap_or(0);
        let capped = runs.iter().filter(|r| r.reached.is_none()).count();
        if capped > 0 {
            findings.push(format!("width {width}: {capped} seeds hit the step cap before full train accuracy"));
        }
        let jobs: Vec<(usize, _)> = runs.into_iter().enumerate().collect();
        use rayon::prelude::*;
        let finished: Vec<_> = jobs
            .into_par_iter()
            .map(|(k, r)| drift_finish(r, train, probe_ref, t_star, cfg.training.snapshot_stride).map(|d| (k, d)))
            .collect::<Result<_, _>>()?;
        let mut kept = Vec::new();
        let mut dropped = 0;
        for (k, d) in finished {
            let instability = detect_instability(&d.drifts, &d.losses, &inst);
            if let Some(step) = instability {
                if step <= t_star {
                    findings.push(format!("width {width} seed {k}: instability at step {step} precedes measurement at {t_star}"));
                }
            }
            if d.diverged || !d.value.is_finite() {
                dropped += 1;
            } else {
                kept.push(d.value);
            }
            details.push(DriftDetail {
                width,
                seed_index: k,
                reached: d.reached,
                measured_at: d.step,
                drift: d.value,
                diverged: d.diverged,
                instability,
            });
        }
        samples.push(kept);
        excluded.push(dropped);
    }
    let s = outcome(cfg, "kernel_drift", REDUCTION, samples, excluded)?;
    Ok((s, details, findings))
}

/// Snapshot intervals without a flag that must precede a late instability.
pub const LATE_QUIET_SNAPSHOTS: usize = 20;

/// A long fixed-rate run past convergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateTime {
    pub width: usize,
    pub lr: f64,
    /// First step with full train accuracy.
    pub reached: Option<usize>,
    /// Earliest flag over the whole run.
    pub instability: Option<usize>,
    /// Earliest flag using only snapshots and losses from `reached` on.
    /// First instability after `reached` preceded by a quiet stretch of
    /// `LATE_QUIET_SNAPSHOTS` snapshot intervals.
    pub late_instability: Option<usize>,
    pub drifts: Vec<(usize, f64)>,
    pub losses: Vec<(usize, f64)>,
    pub diverged: bool,
}

/// Train seed `k` of `cfg.widths[w]` for `training.step_cap` steps,
/// snapshotting the probe kernel, and look for instabilities.
pub fn late_time(cfg: &ExperimentConfig, data: &LoadedData, w: usize, k: usize) -> Result<LateTime, ExperimentError> {
    let steps = cfg.training.step_cap;
    use wideconv_core::train::{drift_series, train_full, TrainOptions};
    let spec = architecture(cfg)?;
    let probe = probe(cfg, data);
    let width = cfg.widths[w];
    let st = init_state(spec, width, cfg.root_seed, k)?;
    let train = &data.train.split;
    let lr = super::lr_for(cfg.lr, || wideconv_core::train::stability_lr(&ntk_gram(&st, &train.inputs)?))?;
    let empty = Split { inputs: Vec::new(), labels: Vec::new() };
    let opts = TrainOptions {
        max_steps: steps,
        record_stride: 1,
        snapshot_stride: Some(cfg.training.snapshot_stride),
        ..TrainOptions::default()
    };
    let run = train_full(st, train, &empty, &probe, lr, &opts)?;
    let t = run.trajectory;
    let reached = t.records.iter().find(|r| r.train_accuracy == 1.0).map(|r| r.step);
    let drifts = drift_series(&t.snapshots);
    let losses = t.losses();
    let opts = InstabilityOptions::default();
    let instability = detect_instability(&drifts, &losses, &opts);
    let quiet = LATE_QUIET_SNAPSHOTS * cfg.training.snapshot_stride;
    let late_instability = reached.and_then(|r| detect_after_quiet(&drifts, &losses, r, quiet, &opts));
    Ok(LateTime { width, lr, reached, instability, late_instability, drifts, losses, diverged: t.diverged })
}
