use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use wideconv_core::fit::ScalingSeries;
use wideconv_core::graph::{
    dtheta_dt_spec, exponent_report, ntk_spec, ntk_squared_spec, pair_spec, CorrelationSpec, DeepLinear,
    DEFAULT_DIAGRAM_CAP,
};
use wideconv_core::oracle::{chain_count, mc_oracle_range, sample_seed, wick_ntk, wick_pair, McPlan};
use wideconv_core::{Image, NetworkSpec};

use super::{architecture, ExperimentError, SeriesOutcome};
use crate::config::{CorrelationConfig, ExperimentConfig};
use crate::data::LoadedData;

pub fn builtin_correlation(name: &str) -> Option<CorrelationSpec> {
    Some(match name {
        "ntk" => ntk_spec(),
        "pair" => pair_spec(),
        "dtheta_dt" => dtheta_dt_spec(),
        "ntk_squared" => ntk_squared_spec(),
        _ => return None,
    })
}

pub fn resolve_correlation(c: &CorrelationConfig) -> Result<CorrelationSpec, ExperimentError> {
    match c {
        CorrelationConfig::Builtin(name) => builtin_correlation(name)
            .ok_or_else(|| ExperimentError::Missing(format!("unknown builtin correlation `{name}`"))),
        CorrelationConfig::Document(doc) => Ok(CorrelationSpec::from_document(doc.clone())?),
    }
}

/// Exponents of one correlation function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentOutcome {
    pub m: usize,
    pub depths: Vec<usize>,
    pub conjecture: f64,
    /// `None` when every diagram vanishes.
    pub deep_linear: Option<f64>,
    pub vanishing: Option<String>,
    pub component_bound: Option<f64>,
    pub cluster_bound: f64,
    pub diagrams: usize,
    pub max_euler: Option<f64>,
    pub display: BTreeMap<String, String>,
}

pub fn exponent_of(corr: &CorrelationSpec, depths: Option<&[usize]>) -> Result<ExponentOutcome, ExperimentError> {
    let depths: Vec<usize> = depths
        .map(<[usize]>::to_vec)
        .or_else(|| corr.depths.clone())
        .unwrap_or_else(|| vec![1; corr.m()]);
    let r = exponent_report(corr, &depths, DEFAULT_DIAGRAM_CAP)?;
    let (deep_linear, vanishing) = match &r.deep_linear {
        DeepLinear::Exponent(s) => (Some(*s), None),
        DeepLinear::Vanishes(v) => (None, Some(format!("{v:?}"))),
    };
    let mut display = BTreeMap::new();
    display.insert("conjecture".into(), r.conjecture.to_string());
    display.insert("cluster_bound".into(), r.cluster_bound.to_string());
    if let Some(s) = deep_linear {
        display.insert("deep_linear".into(), s.to_string());
    }
    if let Some(c) = r.component_bound {
        display.insert("component_bound".into(), c.to_string());
    }
    Ok(ExponentOutcome {
        m: corr.m(),
        depths,
        conjecture: r.conjecture.to_f64(),
        deep_linear: deep_linear.map(|s| s.to_f64()),
        vanishing,
        component_bound: r.component_bound.map(|c| c.to_f64()),
        cluster_bound: r.cluster_bound.to_f64(),
        diagrams: r.diagrams,
        max_euler: r.max_euler.map(|c| c.to_f64()),
        display,
    })
}

pub fn exponent_query(cfg: &ExperimentConfig) -> Result<ExponentOutcome, ExperimentError> {
    let corr = resolve_correlation(cfg.correlation.as_ref().expect("validated"))?;
    exponent_of(&corr, cfg.depths.as_deref())
}

/// Exact and Monte Carlo values at one width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub width: usize,
    pub chains: String,
    pub wick_pair: f64,
    pub wick_ntk: f64,
    pub mc_pair: f64,
    pub mc_pair_stderr: f64,
    pub mc_ntk: f64,
    pub mc_ntk_stderr: f64,
    pub samples: u64,
}

impl OracleRow {
    /// `|mc - exact| / stderr` for the NTK.
    pub fn ntk_z(&self) -> f64 {
        (self.mc_ntk - self.wick_ntk).abs() / self.mc_ntk_stderr
    }
}

/// Two standard-normal inputs of the architecture's shape, or the first two
/// training examples when a dataset is configured.
pub fn oracle_inputs(spec: &NetworkSpec, data: Option<&LoadedData>, seed: u64) -> (Image, Image) {
    if let Some(d) = data.filter(|d| d.train.len() >= 2) {
        return (d.train.inputs()[0].clone(), d.train.inputs()[1].clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = spec.input_shape;
    let mut draw = || Image::new(s, (0..s.len()).map(|_| rng.sample(StandardNormal)).collect()).expect("shape");
    let a = draw();
    let b = draw();
    (a, b)
}

pub fn oracle_row(spec: &NetworkSpec, x1: &Image, x2: &Image, samples: u64, root: u64) -> Result<OracleRow, ExperimentError> {
    let inputs = BTreeMap::from([("x1".to_string(), x1.clone()), ("x2".to_string(), x2.clone())]);
    let pair = mc_oracle_range(spec, &McPlan::new(&pair_spec(), &inputs)?, root, 0..samples)?.estimate();
    let ntk = mc_oracle_range(spec, &McPlan::new(&ntk_spec(), &inputs)?, sample_seed(root, u64::MAX), 0..samples)?.estimate();
    Ok(OracleRow {
        width: spec.width,
        chains: chain_count(spec)?.to_string(),
        wick_pair: wick_pair(spec, x1, x2)?,
        wick_ntk: wick_ntk(spec, x1, x2)?,
        mc_pair: pair.mean,
        mc_pair_stderr: pair.stderr,
        mc_ntk: ntk.mean,
        mc_ntk_stderr: ntk.stderr,
        samples,
    })
}

/// Exact second moments against Monte Carlo at every width, with a flatness
/// fit of the Monte Carlo `E[f f]`.
pub fn oracle_sweep(cfg: &ExperimentConfig) -> Result<(Vec<OracleRow>, Vec<SeriesOutcome>), ExperimentError> {
    let spec = architecture(cfg)?;
    let data = match &cfg.dataset {
        Some(d) => Some(super::load_dataset(d)?),
        None => None,
    };
    let (x1, x2) = oracle_inputs(spec, data.as_ref(), cfg.root_seed);
    let mut rows = Vec::new();
    for &w in &cfg.widths {
        rows.push(oracle_row(&spec.with_width(w), &x1, &x2, cfg.mc_samples, sample_seed(cfg.root_seed, w as u64))?);
    }
    let mut series = Vec::new();
    if cfg.widths.len() >= 3 {
        // Two pseudo-samples per width reproduce the Monte Carlo mean and stderr.
        let samples: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let sign = if r.mc_pair < 0.0 { -1.0 } else { 1.0 };
                vec![sign * r.mc_pair - r.mc_pair_stderr, sign * r.mc_pair + r.mc_pair_stderr]
            })
            .collect();
        let s = ScalingSeries::new("mc_pair", "|E[f(x1) f(x2)]|", cfg.widths.clone(), samples)?;
        series.push(SeriesOutcome::new(s, (cfg.widths[0], *cfg.widths.last().unwrap())));
    }
    Ok((rows, series))
}
