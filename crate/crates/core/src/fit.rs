//! Width series of per-seed measurements and log-log power-law fits.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 3 widths in the fit range, found {found}")]
    TooFewWidths { found: usize },
    #[error("mean at width {width} is {mean}, not positive")]
    NonPositiveMean { width: usize, mean: f64 },
    #[error("width {width} has {found} samples, need at least 2")]
    TooFewSamples { width: usize, found: usize },
    #[error("widths must be strictly increasing")]
    WidthsNotIncreasing,
    #[error("{widths} widths but {samples} sample lists")]
    Length { widths: usize, samples: usize },
}

/// Per-seed scalar measurements of one observable at several widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub observable: String,
    /// How kernel-valued measurements were reduced to one scalar per seed.
    pub reduction: String,
    pub widths: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    /// Seeds dropped per width (non-finite values, divergence).
    #[serde(default)]
    pub excluded: Vec<usize>,
}

impl ScalingSeries {
    pub fn new(
        observable: impl Into<String>,
        reduction: impl Into<String>,
        widths: Vec<usize>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self, FitError> {
        let s = Self {
            observable: observable.into(),
            reduction: reduction.into(),
            excluded: alloc::vec![0; widths.len()],
            widths,
            samples,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.widths.len() != self.samples.len() {
            return Err(FitError::Length { widths: self.widths.len(), samples: self.samples.len() });
        }
        if self.widths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FitError::WidthsNotIncreasing);
        }
        for (&width, s) in self.widths.iter().zip(&self.samples) {
            if s.len() < 2 {
                return Err(FitError::TooFewSamples { width, found: s.len() });
            }
        }
        Ok(())
    }

    pub fn means(&self) -> Vec<f64> {
        self.samples.iter().map(|s| mean(s)).collect()
    }

    /// Standard error of each mean (unbiased variance).
    pub fn stderrs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| math::sqrt(unbiased_variance(s) / s.len() as f64)).collect()
    }

    /// Same series with every sample multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { samples: self.samples.iter().map(|s| s.iter().map(|v| v * c).collect()).collect(), ..self.clone() }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `sum (v - mean)^2 / (N - 1)`.
pub fn unbiased_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// `value ~ exp(log_amplitude) * n^(-alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub log_amplitude: f64,
    pub r_squared: f64,
    pub fit_range: (usize, usize),
    pub widths_used: usize,
}

impl PowerLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        libm::exp(self.log_amplitude - self.alpha * math::ln(n))
    }
}

/// Ordinary least squares of `log mean` on `log n` over widths in `range`
/// (inclusive).
pub fn fit_power_law(series: &ScalingSeries, range: (usize, usize)) -> Result<PowerLawFit, FitError> {
    series.validate()?;
    fit_points(&series.widths, &series.means(), range)
}

pub fn fit_points(widths: &[usize], values: &[f64], range: (usize, usize)) -> Result<PowerLawFit, FitError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let found = widths.iter().filter(|&&n| n >= range.0 && n <= range.1).count();
    if found < 3 {
        return Err(FitError::TooFewWidths { found });
    }
    for (&n, &v) in widths.iter().zip(values) {
        if n < range.0 || n > range.1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(FitError::NonPositiveMean { width: n, mean: v });
        }
        xs.push(math::ln(n as f64));
        ys.push(math::ln(v));
    }
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| { let e = y - intercept - slope * x; e * e }).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(PowerLawFit { alpha: -slope, log_amplitude: intercept, r_squared, fit_range: range, widths_used: xs.len() })
}
