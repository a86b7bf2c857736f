//! Width sweeps over seeded weight ensembles. Every `(width, seed)` task is
//! independent; results are collected in `(width, seed)` order so aggregates
//! do not depend on the worker count.

mod lossgap;
mod sweeps;
mod symbolic;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wideconv_core::fit::{fit_power_law, FitError, PowerLawFit, ScalingSeries};
use wideconv_core::graph::GraphError;
use wideconv_core::nn::{build_network, NetworkState, NnError};
use wideconv_core::oracle::{sample_seed, OracleError};
use wideconv_core::train::TrainError;
use wideconv_core::NetworkSpec;

use crate::config::{ConfigError, DatasetConfig, ExperimentConfig, ExperimentKind, LrPolicy};
use crate::data::{default_cifar_dir, default_mnist_dir, load_cifar10, load_mnist, synthetic, DataError, DataManifest, LoadedData};

pub use lossgap::{loss_gap_experiment, GapOutcome, GapPoint};
pub use sweeps::{
    late_time, measure_dtheta_dt0, measure_kernel_drift, measure_ntk_stats, DriftDetail, LateTime, LATE_QUIET_SNAPSHOTS,
};
pub use symbolic::{
    builtin_correlation, exponent_of, exponent_query, oracle_inputs, oracle_row, oracle_sweep, resolve_correlation,
    ExponentOutcome, OracleRow,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("data-io: {0}")]
    Data(#[from] DataError),
    #[error("nn-core: {0}")]
    Network(#[from] NnError),
    #[error("train-harness: {0}")]
    Train(#[from] TrainError),
    #[error("linear-oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("graph-scaling: {0}")]
    Graph(#[from] GraphError),
    #[error("correlation-lab: {0}")]
    Fit(#[from] FitError),
    #[error("{0}")]
    Missing(String),
}

/// A scaling series with its fit, or the reason the fit failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesOutcome {
    pub series: ScalingSeries,
    #[serde(deserialize_with = "crate::persist::nullable::vec")]
    pub means: Vec<f64>,
    #[serde(deserialize_with = "crate::persist::nullable::vec")]
    pub stderrs: Vec<f64>,
    pub fit_range: (usize, usize),
    pub fit: Option<PowerLawFit>,
    pub fit_error: Option<String>,
}

impl SeriesOutcome {
    pub fn new(series: ScalingSeries, range: (usize, usize)) -> Self {
        let (fit, fit_error) = match fit_power_law(&series, range) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self { means: series.means(), stderrs: series.stderrs(), series, fit_range: range, fit, fit_error }
    }

    pub fn alpha(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.alpha)
    }
}

/// Everything one `run` produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub kind: ExperimentKind,
    pub name: Option<String>,
    pub config_digest: String,
    pub seeds: usize,
    pub widths: Vec<usize>,
    pub data: Option<DataManifest>,
    pub series: Vec<SeriesOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<DriftDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oracle: Vec<OracleRow>,
    /// Noteworthy events: loss increases, step caps, instabilities.
    pub findings: Vec<String>,
}

impl RunOutput {
    fn empty(cfg: &ExperimentConfig) -> Self {
        Self {
            kind: cfg.kind,
            name: cfg.name.clone(),
            config_digest: cfg.digest(),
            seeds: cfg.seeds,
            widths: cfg.widths.clone(),
            data: None,
            series: Vec::new(),
            drift: Vec::new(),
            gap: None,
            exponent: None,
            oracle: Vec::new(),
            findings: Vec::new(),
        }
    }

    /// Output of a bare exponent query.
    pub fn from_exponent(e: ExponentOutcome) -> Self {
        Self {
            kind: ExperimentKind::Exponent,
            name: None,
            config_digest: String::new(),
            seeds: 0,
            widths: Vec::new(),
            data: None,
            series: Vec::new(),
            drift: Vec::new(),
            gap: None,
            exponent: Some(e),
            oracle: Vec::new(),
            findings: Vec::new(),
        }
    }

    pub fn series_named(&self, observable: &str) -> Option<&SeriesOutcome> {
        self.series.iter().find(|s| s.series.observable == observable)
    }

    /// Seeds dropped across all series.
    pub fn excluded(&self) -> usize {
        self.series.iter().map(|s| s.series.excluded.iter().sum::<usize>()).sum::<usize>()
            + self.gap.as_ref().map_or(0, |g| g.series.iter().map(|s| s.excluded).sum())
    }
}

/// Network seed of seed index `k` at `width`.
pub fn network_seed(root: u64, width: usize, k: usize) -> u64 {
    sample_seed(sample_seed(root, width as u64), k as u64)
}

pub fn load_dataset(cfg: &DatasetConfig) -> Result<LoadedData, ExperimentError> {
    Ok(match cfg {
        DatasetConfig::Mnist { path, classes, train_per_class, test_per_class, seed } => {
            let dir = path.clone().unwrap_or_else(default_mnist_dir);
            load_mnist(&dir, *classes, *train_per_class, *test_per_class, *seed)?
        }
        DatasetConfig::Cifar10 { path, classes, train_per_class, test_per_class, seed } => {
            let dir: PathBuf = path.clone().or_else(default_cifar_dir).ok_or_else(|| {
                ExperimentError::Missing(format!(
                    "CIFAR-10 location unknown: set dataset.path or {}",
                    crate::data::DATA_ENV
                ))
            })?;
            load_cifar10(&dir, *classes, *train_per_class, *test_per_class, *seed)?
        }
        DatasetConfig::Synthetic { shape, n_train, n_test, seed } => synthetic(*shape, *n_train, *n_test, *seed),
    })
}

/// Run `f` on every `(width index, seed index)` pair in parallel and group
/// the results by width in seed order.
pub(crate) fn par_tasks<T, F>(widths: &[usize], seeds: usize, f: F) -> Vec<Vec<T>>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync,
{
    let tasks: Vec<(usize, usize)> = (0..widths.len()).flat_map(|w| (0..seeds).map(move |k| (w, k))).collect();
    let mut flat: Vec<T> = tasks.into_par_iter().map(|(w, k)| f(w, k)).collect();
    let mut out = Vec::with_capacity(widths.len());
    for _ in 0..widths.len() {
        let rest = flat.split_off(seeds);
        out.push(std::mem::replace(&mut flat, rest));
    }
    out
}

pub(crate) fn init_state(spec: &NetworkSpec, width: usize, root: u64, k: usize) -> Result<NetworkState, NnError> {
    build_network(&spec.with_width(width), network_seed(root, width, k))
}

pub(crate) fn architecture(cfg: &ExperimentConfig) -> Result<&NetworkSpec, ExperimentError> {
    cfg.architecture.as_ref().ok_or_else(|| ExperimentError::Missing("architecture".into()))
}

pub(crate) fn lr_for(policy: LrPolicy, stability: impl FnOnce() -> Result<f64, TrainError>) -> Result<f64, TrainError> {
    match policy {
        LrPolicy::Fixed { value } => Ok(value),
        LrPolicy::Stability { factor } => Ok(factor * stability()?),
    }
}

/// Execute a validated config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let mut out = RunOutput::empty(cfg);
    match cfg.kind {
        ExperimentKind::Exponent => {
            out.exponent = Some(exponent_query(cfg)?);
        }
        ExperimentKind::Oracle => {
            let (rows, series) = oracle_sweep(cfg)?;
            out.oracle = rows;
            out.series = series;
        }
        kind => {
            let data = load_dataset(cfg.dataset.as_ref().expect("validated"))?;
            out.data = Some(data.manifest.clone());
            match kind {
                ExperimentKind::NtkStats => {
                    let (m, v) = measure_ntk_stats(cfg, &data)?;
                    out.series = vec![m, v];
                }
                ExperimentKind::Dtheta0 => {
                    out.series = vec![measure_dtheta_dt0(cfg, &data)?];
                }
                ExperimentKind::Drift => {
                    let (s, details, findings) = measure_kernel_drift(cfg, &data)?;
                    out.series = vec![s];
                    out.drift = details;
                    out.findings = findings;
                }
                ExperimentKind::Lossgap => {
                    let (g, findings) = loss_gap_experiment(cfg, &data)?;
                    out.series = g.fits.clone();
                    out.gap = Some(g);
                    out.findings = findings;
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(out)
}
