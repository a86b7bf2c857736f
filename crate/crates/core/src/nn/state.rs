use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::spec::{Inner, NetworkSpec, Readout, ShapePlan};
use super::NnError;
use crate::math;

/// Location and forward-pass scale of one weighted layer inside the flat
/// parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerParams {
    pub offset: usize,
    pub len: usize,
    /// Rows of the weight matrix (fan-in `kw * kh * c_prev` or `H * W * c_prev`).
    pub fan_in: usize,
    /// Columns (output channels).
    pub fan_out: usize,
    pub scale: f64,
}

/// Where every weight array sits in the flat parameter vector, and the scale
/// applied to it in the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub plan: ShapePlan,
    pub layers: Vec<Option<LayerParams>>,
    pub readout: LayerParams,
    pub total: usize,
}

impl ParamLayout {
    pub fn of(spec: &NetworkSpec) -> Result<Self, NnError> {
        let plan = spec.plan()?;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (l, layer) in spec.layers.iter().enumerate() {
            let prev = plan.shapes[l];
            let next = plan.shapes[l + 1];
            let entry = layer.weighted_map().map(|inner| {
                let fan_in = match inner {
                    Inner::Conv { kw, kh } => kw * kh * prev.channels,
                    Inner::Dense => prev.len(),
                };
                let p = LayerParams {
                    offset,
                    len: fan_in * next.channels,
                    fan_in,
                    fan_out: next.channels,
                    scale: 1.0 / math::sqrt(fan_in as f64),
                };
                offset += p.len;
                p
            });
            layers.push(entry);
        }
        let last = plan.output();
        let readout = match spec.readout {
            Readout::Flatten => LayerParams {
                offset,
                len: last.len(),
                fan_in: last.len(),
                fan_out: 1,
                scale: 1.0 / math::sqrt(last.len() as f64),
            },
            Readout::Gap => LayerParams {
                offset,
                len: last.channels,
                fan_in: last.channels,
                fan_out: 1,
                scale: 1.0 / (last.positions() as f64 * math::sqrt(last.channels as f64)),
            },
        };
        let total = offset + readout.len;
        Ok(Self { plan, layers, readout, total })
    }
}

/// Concrete weights of a network. All width factors live in the forward pass;
/// the stored weights are the raw unit-variance draws.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    spec: NetworkSpec,
    plan: ShapePlan,
    layers: Vec<Option<LayerParams>>,
    readout: LayerParams,
    params: Vec<f64>,
    seed: u64,
}

/// Draw every weight i.i.d. from N(0, 1) with a ChaCha20 stream keyed by `seed`.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<NetworkState, NnError> {
    let mut state = NetworkState::zeros(spec)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for w in state.params.iter_mut() {
        *w = StandardNormal.sample(&mut rng);
    }
    state.seed = seed;
    Ok(state)
}

impl NetworkState {
    /// Network with every weight equal to zero.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self, NnError> {
        let ParamLayout { plan, layers, readout, total } = ParamLayout::of(spec)?;
        Ok(Self { spec: spec.clone(), plan, layers, readout, params: alloc::vec![0.0; total], seed: 0 })
    }

    /// Network with explicitly given weights in the flat layout.
    pub fn from_params(spec: &NetworkSpec, params: Vec<f64>) -> Result<Self, NnError> {
        let mut state = Self::zeros(spec)?;
        if params.len() != state.params.len() {
            return Err(NnError::DataLength { expected: state.params.len(), found: params.len() });
        }
        state.params = params;
        Ok(state)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Layout of layer `l`, `None` for unweighted layers.
    pub fn layer_params(&self, l: usize) -> Option<LayerParams> {
        self.layers[l]
    }

    pub fn readout_params(&self) -> LayerParams {
        self.readout
    }

    pub fn layer_weights(&self, l: usize) -> Option<&[f64]> {
        self.layers[l].map(|p| &self.params[p.offset..p.offset + p.len])
    }

    pub fn readout_weights(&self) -> &[f64] {
        &self.params[self.readout.offset..self.readout.offset + self.readout.len]
    }

    /// `theta <- theta - step * direction`.
    pub fn descend(&mut self, direction: &[f64], step: f64) {
        assert_eq!(direction.len(), self.params.len());
        for (w, d) in self.params.iter_mut().zip(direction) {
            *w -= step * d;
        }
    }
}
