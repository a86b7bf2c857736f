//! Expansion of a linear conv/skip/GAP network into a sum of chains with
//! fully connected topology that share the parent's weights.

use alloc::vec::Vec;

use super::{OracleError, DEFAULT_CHAIN_CAP};
use crate::nn::{Inner, LayerSpec, NetworkSpec, NetworkState, ParamLayout, Readout};
use crate::tensor::Image;

/// One branch taken through a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    /// Kernel offset `(dy, dx)` of a convolution (plain or on a skip's straight path).
    Conv { layer: usize, dy: usize, dx: usize },
    /// Dense layer (plain or on a skip's straight path).
    Dense { layer: usize },
    /// One spatial position of a global-average layer.
    Gap { layer: usize, position: usize },
    /// Identity branch of skip layer `layer`, from activation `from`.
    Identity { layer: usize, from: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReadoutBranch {
    Flatten,
    Gap { position: usize },
}

/// Weight slice used by a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightRef {
    Layer { layer: usize, dy: usize, dx: usize },
    Readout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    pub steps: Vec<Step>,
    pub readout: ReadoutBranch,
}

impl Chain {
    /// Number of weighted hidden layers along the chain.
    pub fn depth(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Conv { .. } | Step::Dense { .. })).count()
    }

    pub fn weights(&self) -> Vec<WeightRef> {
        let mut w: Vec<WeightRef> = self
            .steps
            .iter()
            .filter_map(|s| match *s {
                Step::Conv { layer, dy, dx } => Some(WeightRef::Layer { layer, dy, dx }),
                Step::Dense { layer } => Some(WeightRef::Layer { layer, dy: 0, dx: 0 }),
                _ => None,
            })
            .collect();
        w.push(WeightRef::Readout);
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainDecomposition {
    pub spec: NetworkSpec,
    pub chains: Vec<Chain>,
}

impl ChainDecomposition {
    /// For every weight slice, the chains that read it.
    pub fn sharing_map(&self) -> Vec<(WeightRef, Vec<usize>)> {
        let mut out: alloc::collections::BTreeMap<WeightRef, Vec<usize>> = Default::default();
        for (i, c) in self.chains.iter().enumerate() {
            for w in c.weights() {
                out.entry(w).or_default().push(i);
            }
        }
        out.into_iter().collect()
    }
}

fn check_linear(spec: &NetworkSpec) -> Result<(), OracleError> {
    if spec.activation != crate::nn::Activation::Identity {
        return Err(OracleError::Nonlinear("activation is not the identity"));
    }
    if spec.layers.iter().any(|l| matches!(l, LayerSpec::MaxPool { .. })) {
        return Err(OracleError::Nonlinear("max-pool layers are not linear"));
    }
    Ok(())
}

fn inner_branches(inner: Inner) -> u128 {
    match inner {
        Inner::Conv { kw, kh } => (kw * kh) as u128,
        Inner::Dense => 1,
    }
}

/// Number of chains, counted without enumerating them. Skip layers add the
/// paths through their identity branch, so the count is a sum over paths.
pub fn chain_count(spec: &NetworkSpec) -> Result<u128, OracleError> {
    check_linear(spec)?;
    let plan = spec.plan()?;
    let mut ways: Vec<u128> = alloc::vec![0; spec.layers.len() + 1];
    ways[0] = 1;
    for (l, layer) in spec.layers.iter().enumerate() {
        ways[l + 1] = match *layer {
            LayerSpec::Conv { kw, kh } => ways[l].saturating_mul((kw * kh) as u128),
            LayerSpec::Dense => ways[l],
            LayerSpec::Skip { target, inner } => ways[l].saturating_mul(inner_branches(inner)).saturating_add(ways[target]),
            LayerSpec::Gap => ways[l].saturating_mul(plan.shapes[l].positions() as u128),
            LayerSpec::MaxPool { .. } => unreachable!("rejected above"),
        };
    }
    let readout = match spec.readout {
        Readout::Flatten => 1,
        Readout::Gap => plan.output().positions() as u128,
    };
    Ok(ways[spec.layers.len()].saturating_mul(readout))
}

/// Enumerate every chain. Fails above `DEFAULT_CHAIN_CAP` chains.
pub fn decompose(spec: &NetworkSpec) -> Result<ChainDecomposition, OracleError> {
    let count = chain_count(spec)?;
    if count > DEFAULT_CHAIN_CAP {
        return Err(OracleError::TooManyChains { count, cap: DEFAULT_CHAIN_CAP });
    }
    let plan = spec.plan()?;
    let depth = spec.layers.len();
    // paths[a]: every step sequence from the input to activation a.
    let mut paths: Vec<Vec<Vec<Step>>> = alloc::vec![Vec::new(); depth + 1];
    paths[0].push(Vec::new());
    for (l, layer) in spec.layers.iter().enumerate() {
        let mut branches: Vec<(usize, Step)> = Vec::new();
        match *layer {
            LayerSpec::Conv { .. } | LayerSpec::Dense | LayerSpec::Skip { .. } => {
                match layer.weighted_map().expect("weighted") {
                    Inner::Conv { kw, kh } => {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                branches.push((l, Step::Conv { layer: l, dy, dx }));
                            }
                        }
                    }
                    Inner::Dense => branches.push((l, Step::Dense { layer: l })),
                }
                if let LayerSpec::Skip { target, .. } = *layer {
                    branches.push((target, Step::Identity { layer: l, from: target }));
                }
            }
            LayerSpec::Gap => {
                for position in 0..plan.shapes[l].positions() {
                    branches.push((l, Step::Gap { layer: l, position }));
                }
            }
            LayerSpec::MaxPool { .. } => unreachable!("rejected by chain_count"),
        }
        let mut next = Vec::new();
        for (from, step) in branches {
            for p in &paths[from] {
                let mut q = p.clone();
                q.push(step);
                next.push(q);
            }
        }
        paths[l + 1] = next;
    }
    let readouts: Vec<ReadoutBranch> = match spec.readout {
        Readout::Flatten => alloc::vec![ReadoutBranch::Flatten],
        Readout::Gap => (0..plan.output().positions()).map(|position| ReadoutBranch::Gap { position }).collect(),
    };
    let mut chains = Vec::with_capacity(count as usize);
    for p in &paths[depth] {
        for &readout in &readouts {
            chains.push(Chain { steps: p.clone(), readout });
        }
    }
    Ok(ChainDecomposition { spec: spec.clone(), chains })
}

/// `f_I(x)`: the chain applied with the parent's weights and normalizations.
pub fn evaluate_chain(chain: &Chain, state: &NetworkState, x: &Image) -> Result<f64, OracleError> {
    let spec = state.spec();
    if x.shape() != spec.input_shape {
        return Err(crate::nn::NnError::InputShape { expected: spec.input_shape, found: x.shape() }.into());
    }
    let layout = ParamLayout::of(spec)?;
    let shapes = &layout.plan.shapes;
    let params = state.params();
    let mut v: Vec<f64> = x.data().to_vec();
    for step in &chain.steps {
        v = match *step {
            Step::Conv { layer, dy, dx } => {
                let (prev, next) = (shapes[layer], shapes[layer + 1]);
                let p = layout.layers[layer].expect("weighted");
                let Some(Inner::Conv { kw, kh }) = spec.layers[layer].weighted_map() else {
                    return Err(OracleError::StateMismatch);
                };
                let (cin, cout) = (prev.channels, next.channels);
                let w = &params[p.offset + (dy * kw + dx) * cin * cout..][..cin * cout];
                let mut out = alloc::vec![0.0; next.len()];
                for r in 0..prev.height {
                    let rr = r as isize + dy as isize - (kh / 2) as isize;
                    if rr < 0 || rr >= prev.height as isize {
                        continue;
                    }
                    for s in 0..prev.width {
                        let cc = s as isize + dx as isize - (kw / 2) as isize;
                        if cc < 0 || cc >= prev.width as isize {
                            continue;
                        }
                        let src = prev.index(rr as usize, cc as usize, 0);
                        let dst = next.index(r, s, 0);
                        for i in 0..cin {
                            let a = v[src + i] * p.scale;
                            for j in 0..cout {
                                out[dst + j] += a * w[i * cout + j];
                            }
                        }
                    }
                }
                out
            }
            Step::Dense { layer } => {
                let p = layout.layers[layer].expect("weighted");
                let w = &params[p.offset..p.offset + p.len];
                let mut out = alloc::vec![0.0; p.fan_out];
                for (k, a) in v.iter().enumerate() {
                    for j in 0..p.fan_out {
                        out[j] += p.scale * a * w[k * p.fan_out + j];
                    }
                }
                out
            }
            Step::Gap { layer, position } => {
                let prev = shapes[layer];
                let inv = 1.0 / prev.positions() as f64;
                v[position * prev.channels..(position + 1) * prev.channels].iter().map(|a| a * inv).collect()
            }
            Step::Identity { .. } => v,
        };
    }
    let last = layout.plan.output();
    let rp = layout.readout;
    let vw = &params[rp.offset..rp.offset + rp.len];
    Ok(match chain.readout {
        ReadoutBranch::Flatten => rp.scale * crate::math::dot(vw, &v),
        ReadoutBranch::Gap { position } => {
            rp.scale * crate::math::dot(vw, &v[position * last.channels..(position + 1) * last.channels])
        }
    })
}

/// `sum_I f_I(x)`.
pub fn evaluate_sum(decomp: &ChainDecomposition, state: &NetworkState, x: &Image) -> Result<f64, OracleError> {
    if state.spec() != &decomp.spec {
        return Err(OracleError::StateMismatch);
    }
    let mut total = 0.0;
    for c in &decomp.chains {
        total += evaluate_chain(c, state, x)?;
    }
    Ok(total)
}
