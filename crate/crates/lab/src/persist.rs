//! Result files: `results.json`, `series.csv`, `plot.csv`, `gap.csv` and
//! `manifest.json`, each tagged with the config digest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, Precision};
use crate::experiments::RunOutput;

pub const RESULTS: &str = "results.json";
pub const SERIES: &str = "series.csv";
pub const PLOT: &str = "plot.csv";
pub const GAP: &str = "gap.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> PersistError + '_ {
    move |source| PersistError::Csv { path: path.display().to_string(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub kind: String,
    pub name: Option<String>,
    pub precision: Precision,
    pub version: String,
    pub created_unix: u64,
    pub config: ExperimentConfig,
    pub data: Option<crate::data::DataManifest>,
    pub files: Vec<String>,
}

/// JSON writes non-finite floats as `null`; read them back as NaN.
pub mod nullable {
    use serde::{Deserialize, Deserializer};

    pub fn f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub fn vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }
}

pub fn artifact_version() -> String {
    format!("wideconv {}", env!("CARGO_PKG_VERSION"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| PersistError::Json { path: path.display().to_string(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn write_series(path: &Path, out: &RunOutput) -> Result<(), PersistError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["config_digest", "observable", "width", "mean", "stderr", "samples", "excluded"])
        .map_err(csv_err(path))?;
    for s in &out.series {
        for (i, &n) in s.series.widths.iter().enumerate() {
            w.write_record([
                out.config_digest.clone(),
                s.series.observable.clone(),
                n.to_string(),
                format!("{:e}", s.means[i]),
                format!("{:e}", s.stderrs[i]),
                s.series.samples[i].len().to_string(),
                s.series.excluded.get(i).copied().unwrap_or(0).to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// `(ln n, ln value, fit line)` per width; the fit column is empty outside
/// the fit range or without a fit.
fn write_plot(path: &Path, out: &RunOutput) -> Result<(), PersistError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["config_digest", "observable", "log_n", "log_value", "fit_line"]).map_err(csv_err(path))?;
    for s in &out.series {
        for (i, &n) in s.series.widths.iter().enumerate() {
            let m = s.means[i];
            let line = s
                .fit
                .as_ref()
                .filter(|_| n >= s.fit_range.0 && n <= s.fit_range.1)
                .map(|f| format!("{:e}", f.predict(n as f64).ln()))
                .unwrap_or_default();
            let logv = if m > 0.0 { format!("{:e}", m.ln()) } else { String::new() };
            w.write_record([out.config_digest.clone(), s.series.observable.clone(), format!("{:e}", (n as f64).ln()), logv, line])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_gap(path: &Path, out: &RunOutput) -> Result<(), PersistError> {
    let Some(g) = &out.gap else { return Ok(()) };
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "config_digest",
        "width",
        "step",
        "full_test_loss",
        "linear_test_loss",
        "loss_gap",
        "full_test_accuracy",
        "linear_test_accuracy",
    ])
    .map_err(csv_err(path))?;
    for s in &g.series {
        for (i, step) in s.steps.iter().enumerate() {
            w.write_record([
                out.config_digest.clone(),
                s.width.to_string(),
                step.to_string(),
                format!("{:e}", s.full_test_loss[i]),
                format!("{:e}", s.linear_test_loss[i]),
                format!("{:e}", s.full_test_loss[i] - s.linear_test_loss[i]),
                format!("{:e}", s.full_test_accuracy[i]),
                format!("{:e}", s.linear_test_accuracy[i]),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Write every artifact of `out` into `dir`; returns the written paths.
pub fn persist(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<Vec<PathBuf>, PersistError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = vec![RESULTS.to_string()];
    write_json(&dir.join(RESULTS), out)?;
    if !out.series.is_empty() {
        write_series(&dir.join(SERIES), out)?;
        write_plot(&dir.join(PLOT), out)?;
        files.push(SERIES.into());
        files.push(PLOT.into());
    }
    if out.gap.is_some() {
        write_gap(&dir.join(GAP), out)?;
        files.push(GAP.into());
    }
    let manifest = Manifest {
        config_digest: out.config_digest.clone(),
        kind: out.kind.name().to_string(),
        name: out.name.clone(),
        precision: cfg.precision,
        version: artifact_version(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config: cfg.clone(),
        data: out.data.clone(),
        files: files.clone(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    files.push(MANIFEST.into());
    Ok(files.into_iter().map(|f| dir.join(f)).collect())
}
