//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wideconv_core::graph::SpecDocument;
use wideconv_core::{NetworkSpec, Shape};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: at `{field}`: {message}")]
    Schema { path: String, field: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NtkStats,
    Dtheta0,
    Drift,
    Lossgap,
    Exponent,
    Oracle,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::NtkStats => "ntk-stats",
            ExperimentKind::Dtheta0 => "dtheta0",
            ExperimentKind::Drift => "drift",
            ExperimentKind::Lossgap => "lossgap",
            ExperimentKind::Exponent => "exponent",
            ExperimentKind::Oracle => "oracle",
        }
    }
}

fn default_classes() -> [u8; 2] {
    [0, 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Mnist {
        /// Directory of IDX files; defaults to `$WIDECONV_DATA/mnist`, then the bundled subset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default = "default_classes")]
        classes: [u8; 2],
        train_per_class: usize,
        #[serde(default)]
        test_per_class: usize,
        #[serde(default)]
        seed: u64,
    },
    Cifar10 {
        /// Defaults to `$WIDECONV_DATA/cifar-10-batches-bin`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default = "default_classes")]
        classes: [u8; 2],
        train_per_class: usize,
        #[serde(default)]
        test_per_class: usize,
        #[serde(default)]
        seed: u64,
    },
    Synthetic {
        shape: Shape,
        n_train: usize,
        #[serde(default)]
        n_test: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase", deny_unknown_fields)]
pub enum LrPolicy {
    /// `factor * 0.25 / lambda_max` of each seed's initial train kernel.
    Stability {
        #[serde(default = "one")]
        factor: f64,
    },
    Fixed { value: f64 },
}

fn one() -> f64 {
    1.0
}

impl Default for LrPolicy {
    fn default() -> Self {
        LrPolicy::Stability { factor: 1.0 }
    }
}

/// Only double precision is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Finite-difference step as a fraction of the stability learning rate.
    pub fd_step: f64,
    pub step_cap: usize,
    pub snapshot_stride: usize,
    /// Steps of each loss-gap run.
    pub horizon: usize,
    pub record_stride: usize,
    /// Late measurement step as a multiple of the early-stopping step.
    pub late_factor: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { fd_step: 0.01, step_cap: 20_000, snapshot_stride: 10, horizon: 3000, record_stride: 1, late_factor: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationConfig {
    /// One of `ntk`, `pair`, `dtheta_dt`, `ntk_squared`.
    Builtin(String),
    Document(SpecDocument),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub widths: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default)]
    pub lr: LrPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<[usize; 2]>,
    /// Leading train examples forming the probe grid; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_examples: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationConfig>,
    /// Per-factor chain depths for exponent queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    /// Monte Carlo samples per width for oracle runs.
    #[serde(default = "default_mc")]
    pub mc_samples: u64,
}

fn default_seeds() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_mc() -> u64 {
    10_000
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
            path: origin.to_string(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON with the output directory cleared.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let needs_sweep = !matches!(self.kind, ExperimentKind::Exponent);
        if needs_sweep {
            if self.architecture.is_none() {
                return Err(ConfigError::Invalid(format!("{} needs an architecture", self.kind.name())));
            }
            if self.widths.is_empty() {
                return Err(ConfigError::Invalid("widths must not be empty".into()));
            }
            if self.widths.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::Invalid("widths must be strictly increasing".into()));
            }
        }
        let needs_data = matches!(
            self.kind,
            ExperimentKind::NtkStats | ExperimentKind::Dtheta0 | ExperimentKind::Drift | ExperimentKind::Lossgap
        );
        if needs_data {
            if self.dataset.is_none() {
                return Err(ConfigError::Invalid(format!("{} needs a dataset", self.kind.name())));
            }
            if self.seeds < 2 {
                return Err(ConfigError::Invalid("at least 2 seeds per width are needed".into()));
            }
        }
        if matches!(self.kind, ExperimentKind::Exponent) && self.correlation.is_none() {
            return Err(ConfigError::Invalid("exponent needs a correlation".into()));
        }
        if self.training.fd_step <= 0.0 {
            return Err(ConfigError::Invalid("training.fd_step must be positive".into()));
        }
        if self.training.snapshot_stride == 0 || self.training.record_stride == 0 {
            return Err(ConfigError::Invalid("strides must be positive".into()));
        }
        Ok(())
    }

    /// Configured fit range, else widths from 64 up when at least three
    /// qualify, else all widths.
    pub fn effective_fit_range(&self) -> (usize, usize) {
        if let Some([a, b]) = self.fit_range {
            return (a, b);
        }
        let max = self.widths.last().copied().unwrap_or(0);
        let large = self.widths.iter().filter(|&&n| n >= 64).count();
        if large >= 3 {
            (64, max)
        } else {
            (self.widths.first().copied().unwrap_or(0), max)
        }
    }
}
