//! Empirical NTK by per-layer accumulation of gradient inner products.
//!
//! Dense and readout contributions use their rank-one structure. Convolution
//! slices are materialized in row chunks whose total size stays within two
//! full gradient vectors.

use alloc::vec::Vec;

use super::kernel::KernelMatrix;
use super::ops::channel_sums;
use super::pass::{sensitivity, weight_slice, Sensitivity};
use super::spec::{Inner, Readout};
use super::state::NetworkState;
use super::NnError;
use crate::math::dot;
use crate::tensor::Image;

pub fn ntk_matrix(state: &NetworkState, rows: &[Image], cols: &[Image]) -> Result<KernelMatrix, NnError> {
    let rs = rows.iter().map(|x| sensitivity(state, x)).collect::<Result<Vec<_>, _>>()?;
    let cs = cols.iter().map(|x| sensitivity(state, x)).collect::<Result<Vec<_>, _>>()?;
    let values = ntk_from_sensitivities(state, &rs, Some(&cs));
    Ok(KernelMatrix::new((0..rows.len()).collect(), (0..cols.len()).collect(), values))
}

/// Square kernel over `xs`; computes the upper triangle and mirrors it, so the
/// result is exactly symmetric.
pub fn ntk_gram(state: &NetworkState, xs: &[Image]) -> Result<KernelMatrix, NnError> {
    let s = xs.iter().map(|x| sensitivity(state, x)).collect::<Result<Vec<_>, _>>()?;
    Ok(KernelMatrix::square(xs.len(), ntk_from_sensitivities(state, &s, None)))
}

/// Row-major kernel values from cached sensitivities (seed 1). `cols = None`
/// means the square kernel of `rows` with itself.
pub fn ntk_from_sensitivities(state: &NetworkState, rows: &[Sensitivity], cols: Option<&[Sensitivity]>) -> Vec<f64> {
    let symmetric = cols.is_none();
    let cols = cols.unwrap_or(rows);
    let (nr, nc) = (rows.len(), cols.len());
    let mut out = alloc::vec![0.0; nr * nc];
    let pairs = |i: usize| if symmetric { i..nc } else { 0..nc };
    let spec = state.spec();
    let shapes = &state.plan().shapes;

    for (l, layer) in spec.layers.iter().enumerate() {
        let Some(p) = state.layer_params(l) else { continue };
        let s2 = p.scale * p.scale;
        match layer.weighted_map().expect("weighted") {
            Inner::Dense => {
                for i in 0..nr {
                    for j in pairs(i) {
                        let a = dot(&rows[i].acts[l], &cols[j].acts[l]);
                        let g = dot(&rows[i].grad_pre[l], &cols[j].grad_pre[l]);
                        out[i * nc + j] += s2 * a * g;
                    }
                }
            }
            inner @ Inner::Conv { .. } => {
                let slice = |s: &Sensitivity| {
                    let mut w = alloc::vec![0.0; p.len];
                    weight_slice(inner, p, &s.acts[l], &s.grad_pre[l], shapes[l], 0.0, &mut w);
                    w
                };
                let budget = 2 * state.param_count();
                let chunk = (budget / p.len.max(1)).saturating_sub(1).max(1);
                let mut r0 = 0;
                while r0 < nr {
                    let r1 = (r0 + chunk).min(nr);
                    let held: Vec<Vec<f64>> = rows[r0..r1].iter().map(slice).collect();
                    let first = if symmetric { r0 } else { 0 };
                    for j in first..nc {
                        let streamed;
                        let cj: &[f64] = if symmetric && j < r1 {
                            &held[j - r0]
                        } else {
                            streamed = slice(&cols[j]);
                            &streamed
                        };
                        let top = if symmetric { r1.min(j + 1) } else { r1 };
                        for i in r0..top {
                            out[i * nc + j] += dot(&held[i - r0], cj);
                        }
                    }
                    r0 = r1;
                }
            }
        }
    }

    let rp = state.readout_params();
    let s2 = rp.scale * rp.scale;
    let depth = spec.layers.len();
    match spec.readout {
        Readout::Flatten => {
            for i in 0..nr {
                for j in pairs(i) {
                    out[i * nc + j] += s2 * dot(&rows[i].acts[depth], &cols[j].acts[depth]);
                }
            }
        }
        Readout::Gap => {
            let c = state.plan().output().channels;
            let rsum: Vec<Vec<f64>> = rows.iter().map(|s| channel_sums(&s.acts[depth], c)).collect();
            let csum: Vec<Vec<f64>> =
                if symmetric { rsum.clone() } else { cols.iter().map(|s| channel_sums(&s.acts[depth], c)).collect() };
            for i in 0..nr {
                for j in pairs(i) {
                    out[i * nc + j] += s2 * dot(&rsum[i], &csum[j]);
                }
            }
        }
    }

    if symmetric {
        for i in 0..nr {
            for j in 0..i {
                out[i * nc + j] = out[j * nc + i];
            }
        }
    }
    out
}
