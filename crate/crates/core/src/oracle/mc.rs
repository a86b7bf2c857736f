//! Monte Carlo estimates of correlation functions over independently seeded
//! networks.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use super::OracleError;
use crate::graph::CorrelationSpec;
use crate::math;
use crate::nn::{build_network, forward_one, ntk_gram, NetworkSpec};
use crate::tensor::Image;

/// Seed of sample `k` under `root` (SplitMix64 finalizer), independent of how
/// samples are split across workers.
pub fn sample_seed(root: u64, k: u64) -> u64 {
    let mut z = root ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which network quantities one sample multiplies together.
#[derive(Clone, Debug, PartialEq)]
pub struct McPlan {
    pub inputs: Vec<Image>,
    /// Input index of each plain `f` factor.
    pub plain: Vec<usize>,
    /// Input indices of each contracted `df . df` pair.
    pub contracted: Vec<(usize, usize)>,
}

impl McPlan {
    pub fn new(corr: &CorrelationSpec, inputs: &BTreeMap<String, Image>) -> Result<Self, OracleError> {
        let mut names: Vec<&str> = Vec::new();
        let mut index_of = |name: &str| -> Result<usize, OracleError> {
            if !inputs.contains_key(name) {
                return Err(OracleError::MissingInput(name.into()));
            }
            Ok(match names.iter().position(|n| *n == name) {
                Some(i) => i,
                None => {
                    names.push(inputs.get_key_value(name).expect("checked").0.as_str());
                    names.len() - 1
                }
            })
        };
        let mut plain = Vec::new();
        let mut slot_input = Vec::with_capacity(corr.factors.len());
        for (f, factor) in corr.factors.iter().enumerate() {
            if factor.slots.len() > 1 {
                return Err(OracleError::Unrealizable { factor: f, slots: factor.slots.len() });
            }
            let i = index_of(&factor.input)?;
            if factor.slots.is_empty() {
                plain.push(i);
            }
            slot_input.push(i);
        }
        let contracted = corr.pairs.iter().map(|(a, b)| (slot_input[a.factor], slot_input[b.factor])).collect();
        let inputs = names.iter().map(|n| inputs[*n].clone()).collect();
        Ok(Self { inputs, plain, contracted })
    }
}

/// The product for one network drawn with `seed`.
pub fn mc_sample(spec: &NetworkSpec, plan: &McPlan, seed: u64) -> Result<f64, OracleError> {
    let state = build_network(spec, seed)?;
    let mut value = 1.0;
    for &i in &plan.plain {
        value *= forward_one(&state, &plan.inputs[i])?;
    }
    if !plan.contracted.is_empty() {
        let k = ntk_gram(&state, &plan.inputs)?;
        for &(a, b) in &plan.contracted {
            value *= k.get(a, b);
        }
    }
    Ok(value)
}

/// Running mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct McAccumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl McAccumulator {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    /// Combine with an accumulator over later samples.
    pub fn merge(&mut self, o: &McAccumulator) {
        if o.count == 0 {
            return;
        }
        let n = self.count + o.count;
        let d = o.mean - self.mean;
        self.mean += d * o.count as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.count as f64 * o.count as f64) / n as f64;
        self.count = n;
    }

    pub fn estimate(&self) -> McEstimate {
        let var = if self.count > 1 { self.m2 / (self.count - 1) as f64 } else { f64::NAN };
        McEstimate { mean: self.mean, stderr: math::sqrt(var / self.count as f64), samples: self.count }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

/// Accumulate samples `range` under `root`.
pub fn mc_oracle_range(
    spec: &NetworkSpec,
    plan: &McPlan,
    root: u64,
    range: Range<u64>,
) -> Result<McAccumulator, OracleError> {
    let mut acc = McAccumulator::default();
    for k in range {
        acc.push(mc_sample(spec, plan, sample_seed(root, k))?);
    }
    Ok(acc)
}

pub fn mc_oracle(
    spec: &NetworkSpec,
    corr: &CorrelationSpec,
    inputs: &BTreeMap<String, Image>,
    n_samples: u64,
    root: u64,
) -> Result<McEstimate, OracleError> {
    let plan = McPlan::new(corr, inputs)?;
    Ok(mc_oracle_range(spec, &plan, root, 0..n_samples)?.estimate())
}
