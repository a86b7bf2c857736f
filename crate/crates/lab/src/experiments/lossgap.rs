use serde::{Deserialize, Serialize};
use wideconv_core::fit::ScalingSeries;
use wideconv_core::nn::ntk_gram;
use wideconv_core::train::{gap_seed, stability_lr, GapSeries, SeedGap};

use super::{architecture, init_state, lr_for, par_tasks, ExperimentError, SeriesOutcome};
use crate::config::ExperimentConfig;
use crate::data::LoadedData;

/// Gap measurements of one width at its early-stopping step and a later step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub width: usize,
    pub early_step: usize,
    pub late_step: usize,
    #[serde(deserialize_with = "crate::persist::nullable::f64")]
    pub gap_early: f64,
    #[serde(deserialize_with = "crate::persist::nullable::f64")]
    pub gap_late: f64,
    #[serde(deserialize_with = "crate::persist::nullable::f64")]
    pub accuracy_gap_early: f64,
    #[serde(deserialize_with = "crate::persist::nullable::f64")]
    pub accuracy_gap_late: f64,
}

impl GapPoint {
    /// Gap changes sign between the two steps.
    pub fn sign_flip(&self) -> bool {
        self.gap_early * self.gap_late < 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapOutcome {
    pub series: Vec<GapSeries>,
    pub points: Vec<GapPoint>,
    /// Fits of `|gap|` at the early and late steps.
    pub fits: Vec<SeriesOutcome>,
}

/// Largest logged step not exceeding `target`.
fn snap(steps: &[usize], target: usize) -> usize {
    steps.iter().copied().filter(|&s| s <= target).max().unwrap_or(0)
}

/// Per-seed gaps at `step`, multiplied by the sign of their mean.
fn aligned(runs: &[SeedGap], step: usize) -> (Vec<f64>, f64) {
    let g: Vec<f64> = runs
        .iter()
        .filter(|r| !r.full.diverged && !r.linear.diverged)
        .filter_map(|r| Some(r.full.at(step)?.test_loss - r.linear.at(step)?.test_loss))
        .collect();
    let mean = g.iter().sum::<f64>() / g.len().max(1) as f64;
    let sign = if mean < 0.0 { -1.0 } else { 1.0 };
    (g.into_iter().map(|v| sign * v).collect(), mean)
}

/// Full versus linearized training from shared initializations.
pub fn loss_gap_experiment(cfg: &ExperimentConfig, data: &LoadedData) -> Result<(GapOutcome, Vec<String>), ExperimentError> {
    let spec = architecture(cfg)?;
    let (train, test) = (&data.train.split, &data.test.split);
    let t = &cfg.training;
    let runs = par_tasks(&cfg.widths, cfg.seeds, |w, k| -> Result<SeedGap, ExperimentError> {
        let st = init_state(spec, cfg.widths[w], cfg.root_seed, k)?;
        let lr = lr_for(cfg.lr, || stability_lr(&ntk_gram(&st, &train.inputs)?))?;
        Ok(gap_seed(st, train, test, lr, t.horizon, t.record_stride)?)
    });
    let mut series = Vec::new();
    let mut points = Vec::new();
    let mut early_samples = Vec::new();
    let mut late_samples = Vec::new();
    let mut excluded = Vec::new();
    let mut findings = Vec::new();
    for (w, rs) in runs.into_iter().enumerate() {
        let width = cfg.widths[w];
        let rs: Vec<SeedGap> = rs.into_iter().collect::<Result<_, _>>()?;
        for (k, r) in rs.iter().enumerate() {
            if !r.full.diverged {
                if let Some(&step) = r.full.loss_increases().first() {
                    findings.push(format!("width {width} seed {k}: full-model train loss increased at step {step}"));
                }
            }
        }
        let g = GapSeries::aggregate(width, &rs);
        let early = g.early_stopping_step().unwrap_or(0);
        let late = snap(&g.steps, early.saturating_mul(t.late_factor).max(early));
        if late < early.saturating_mul(t.late_factor) {
            findings.push(format!("width {width}: late step clipped to {late} by the horizon"));
        }
        let (e, gap_early) = aligned(&rs, early);
        let (l, gap_late) = aligned(&rs, late);
        let acc = g.accuracy_gap();
        let at = |s: usize| g.steps.iter().position(|&x| x == s).map_or(f64::NAN, |i| acc[i]);
        points.push(GapPoint {
            width,
            early_step: early,
            late_step: late,
            gap_early,
            gap_late,
            accuracy_gap_early: at(early),
            accuracy_gap_late: at(late),
        });
        excluded.push(g.excluded);
        early_samples.push(e);
        late_samples.push(l);
        series.push(g);
    }
    let range = cfg.effective_fit_range();
    let mut fits = Vec::new();
    for (name, samples) in [("lossgap_early", early_samples), ("lossgap_late", late_samples)] {
        let s = ScalingSeries {
            observable: name.into(),
            reduction: "|seed mean of full minus linear test loss|".into(),
            widths: cfg.widths.clone(),
            samples,
            excluded: excluded.clone(),
        };
        fits.push(SeriesOutcome::new(s, range));
    }
    Ok((GapOutcome { series, points, fits }, findings))
}
