//! Summary table over completed runs.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::experiments::RunOutput;
use crate::persist::{Manifest, MANIFEST, RESULTS, SERIES};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}: no such directory")]
    NoDirectory(String),
    #[error("{0}: results without a manifest")]
    MissingManifest(String),
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: config digest {found} does not match manifest {expected} (use --force to merge)")]
    DigestMismatch { path: String, expected: String, found: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub experiment: String,
    pub observable: String,
    pub alpha: Option<f64>,
    pub r_squared: Option<f64>,
    pub widths: String,
    pub seeds: usize,
    pub excluded: usize,
    pub digest: String,
}

/// Directories under `root` (including `root`) holding a manifest or results.
fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        if d.join(MANIFEST).is_file() || d.join(RESULTS).is_file() {
            out.push(d.clone());
        }
        if let Ok(entries) = fs::read_dir(&d) {
            let mut subs: Vec<PathBuf> = entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
            subs.sort();
            stack.extend(subs.into_iter().rev());
        }
    }
    out.sort();
    out
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ReportError::Read { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| ReportError::Read { path: path.display().to_string(), message: e.to_string() })
}

/// Digests in the first column of a CSV artifact.
fn csv_digests(path: &Path) -> Result<Vec<String>, ReportError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| ReportError::Read { path: path.display().to_string(), message: e.to_string() })?;
    r.records()
        .map(|rec| {
            rec.map(|r| r.get(0).unwrap_or_default().to_string())
                .map_err(|e| ReportError::Read { path: path.display().to_string(), message: e.to_string() })
        })
        .collect()
}

/// One row per fitted observable of every run under `root`.
pub fn report(root: &Path, force: bool) -> Result<Vec<ReportRow>, ReportError> {
    if !root.is_dir() {
        return Err(ReportError::NoDirectory(root.display().to_string()));
    }
    let mut rows = Vec::new();
    for dir in run_dirs(root) {
        let mpath = dir.join(MANIFEST);
        if !mpath.is_file() {
            return Err(ReportError::MissingManifest(dir.display().to_string()));
        }
        let manifest: Manifest = read(&mpath)?;
        let out: RunOutput = read(&dir.join(RESULTS))?;
        let mut found = vec![out.config_digest.clone()];
        if dir.join(SERIES).is_file() {
            found.extend(csv_digests(&dir.join(SERIES))?);
        }
        if let Some(bad) = found.into_iter().find(|d| *d != manifest.config_digest) {
            if !force {
                return Err(ReportError::DigestMismatch {
                    path: dir.display().to_string(),
                    expected: manifest.config_digest.clone(),
                    found: bad,
                });
            }
        }
        let run = dir.strip_prefix(root).unwrap_or(&dir).display().to_string();
        let run = if run.is_empty() { ".".to_string() } else { run };
        let label = out.name.clone().unwrap_or_else(|| manifest.kind.clone());
        let widths = out.widths.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let excluded = out.excluded();
        if out.series.is_empty() {
            rows.push(ReportRow {
                run: run.clone(),
                experiment: label.clone(),
                observable: manifest.kind.clone(),
                alpha: None,
                r_squared: None,
                widths: widths.clone(),
                seeds: out.seeds,
                excluded,
                digest: manifest.config_digest.clone(),
            });
        }
        for s in &out.series {
            rows.push(ReportRow {
                run: run.clone(),
                experiment: label.clone(),
                observable: s.series.observable.clone(),
                alpha: s.fit.as_ref().map(|f| f.alpha),
                r_squared: s.fit.as_ref().map(|f| f.r_squared),
                widths: widths.clone(),
                seeds: out.seeds,
                excluded: s.series.excluded.iter().sum(),
                digest: manifest.config_digest.clone(),
            });
        }
    }
    Ok(rows)
}

/// Fixed-width text table.
pub fn render(rows: &[ReportRow]) -> String {
    let mut s = format!(
        "{:<20} {:<14} {:<16} {:>8} {:>7} {:<28} {:>6} {:>8}\n",
        "run", "experiment", "observable", "alpha", "r2", "widths", "seeds", "excluded"
    );
    for r in rows {
        let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
        s.push_str(&format!(
            "{:<20} {:<14} {:<16} {:>8} {:>7} {:<28} {:>6} {:>8}\n",
            r.run,
            r.experiment,
            r.observable,
            f(r.alpha, 3),
            f(r.r_squared, 4),
            r.widths,
            r.seeds,
            r.excluded
        ));
    }
    s
}
