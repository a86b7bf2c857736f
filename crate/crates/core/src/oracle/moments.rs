//! Exact second moments of deep-linear networks by layer-wise propagation of
//! the channel-traced cross-moment `T_pq = sum_i E[a(x1)_{p,i} a(x2)_{q,i}]`.
//!
//! Every weighted layer multiplies by fresh zero-mean weights, so only
//! same-activation moments are ever needed. The expected NTK pairs each
//! layer's forward moment with the adjoint of the moment recursion above it.

use alloc::vec::Vec;

use super::chains::chain_count;
use super::OracleError;
use crate::nn::{Inner, LayerSpec, NetworkSpec, ParamLayout, Readout};
use crate::tensor::{Image, Shape};

/// Forward moment map of a conv with kernel `kw x kh`:
/// `T'_{pq} = c * sum_ab T_{p+ab, q+ab}`.
fn conv_forward(t: &[f64], shape: Shape, kw: usize, kh: usize, c: f64) -> Vec<f64> {
    let np = shape.positions();
    let mut out = alloc::vec![0.0; np * np];
    for_each_shift(shape, kw, kh, |p, ps, q, qs| out[p * np + q] += c * t[ps * np + qs]);
    out
}

/// Adjoint of [`conv_forward`], accumulated into `acc`.
fn conv_adjoint(a: &[f64], shape: Shape, kw: usize, kh: usize, c: f64, acc: &mut [f64]) {
    let np = shape.positions();
    for_each_shift(shape, kw, kh, |p, ps, q, qs| acc[ps * np + qs] += c * a[p * np + q]);
}

/// Calls `f(p, p + ab, q, q + ab)` for every position pair and offset with
/// both shifted positions inside the image.
fn for_each_shift(shape: Shape, kw: usize, kh: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let (h, w) = (shape.height as isize, shape.width as isize);
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    for dy in 0..kh as isize {
        for dx in 0..kw as isize {
            let (oy, ox) = (dy - ry, dx - rx);
            for pr in 0..h {
                for pc in 0..w {
                    let (sr, sc) = (pr + oy, pc + ox);
                    if sr < 0 || sr >= h || sc < 0 || sc >= w {
                        continue;
                    }
                    let p = (pr * w + pc) as usize;
                    let ps = (sr * w + sc) as usize;
                    for qr in 0..h {
                        for qc in 0..w {
                            let (tr, tc) = (qr + oy, qc + ox);
                            if tr < 0 || tr >= h || tc < 0 || tc >= w {
                                continue;
                            }
                            f(p, ps, (qr * w + qc) as usize, (tr * w + tc) as usize);
                        }
                    }
                }
            }
        }
    }
}

fn trace_diag(t: &[f64], np: usize) -> f64 {
    (0..np).map(|p| t[p * np + p]).sum()
}

/// Moment produced by the weighted map of layer `l` from `t`.
fn weighted_forward(inner: Inner, t: &[f64], prev: Shape, n_out: usize, scale: f64) -> Vec<f64> {
    let c = n_out as f64 * scale * scale;
    match inner {
        Inner::Conv { kw, kh } => conv_forward(t, prev, kw, kh, c),
        Inner::Dense => alloc::vec![c * trace_diag(t, prev.positions())],
    }
}

fn weighted_adjoint(inner: Inner, a: &[f64], prev: Shape, n_out: usize, scale: f64, acc: &mut [f64]) {
    let c = n_out as f64 * scale * scale;
    match inner {
        Inner::Conv { kw, kh } => conv_adjoint(a, prev, kw, kh, c, acc),
        Inner::Dense => {
            let np = prev.positions();
            for p in 0..np {
                acc[p * np + p] += c * a[0];
            }
        }
    }
}

fn readout_weights(readout: Readout, last: Shape) -> Vec<f64> {
    let np = last.positions();
    let n = last.channels as f64;
    match readout {
        Readout::Flatten => {
            let mut r = alloc::vec![0.0; np * np];
            for p in 0..np {
                r[p * np + p] = 1.0 / (np as f64 * n);
            }
            r
        }
        Readout::Gap => alloc::vec![1.0 / ((np * np) as f64 * n); np * np],
    }
}

/// Traced cross-moments of every activation, `moments[a]` for activation `a`.
pub fn forward_moments(spec: &NetworkSpec, x1: &Image, x2: &Image) -> Result<Vec<Vec<f64>>, OracleError> {
    chain_count(spec)?;
    for x in [x1, x2] {
        if x.shape() != spec.input_shape {
            return Err(crate::nn::NnError::InputShape { expected: spec.input_shape, found: x.shape() }.into());
        }
    }
    let layout = ParamLayout::of(spec)?;
    let shapes = &layout.plan.shapes;
    let s0 = shapes[0];
    let np = s0.positions();
    let mut t0 = alloc::vec![0.0; np * np];
    for p in 0..np {
        for q in 0..np {
            let a = &x1.data()[p * s0.channels..(p + 1) * s0.channels];
            let b = &x2.data()[q * s0.channels..(q + 1) * s0.channels];
            t0[p * np + q] = crate::math::dot(a, b);
        }
    }
    let mut moments = alloc::vec![t0];
    for (l, layer) in spec.layers.iter().enumerate() {
        let prev = shapes[l];
        let next = match *layer {
            LayerSpec::Conv { .. } | LayerSpec::Dense | LayerSpec::Skip { .. } => {
                let p = layout.layers[l].expect("weighted");
                let mut t = weighted_forward(layer.weighted_map().expect("weighted"), &moments[l], prev, p.fan_out, p.scale);
                if let LayerSpec::Skip { target, .. } = *layer {
                    for (a, b) in t.iter_mut().zip(&moments[target]) {
                        *a += b;
                    }
                }
                t
            }
            LayerSpec::Gap => {
                let np = prev.positions();
                alloc::vec![moments[l].iter().sum::<f64>() / (np * np) as f64]
            }
            LayerSpec::MaxPool { .. } => unreachable!("rejected by chain_count"),
        };
        moments.push(next);
    }
    Ok(moments)
}

/// Exact `E[f(x1) f(x2)]` over the weight distribution.
pub fn wick_pair(spec: &NetworkSpec, x1: &Image, x2: &Image) -> Result<f64, OracleError> {
    let t = forward_moments(spec, x1, x2)?;
    let last = spec.plan()?.output();
    Ok(crate::math::dot(&readout_weights(spec.readout, last), t.last().expect("input moment")))
}

/// Exact `E[Theta(x1, x2)]`: readout term plus, for every weighted layer,
/// the adjoint moment above it paired with the moment its weights produce.
pub fn wick_ntk(spec: &NetworkSpec, x1: &Image, x2: &Image) -> Result<f64, OracleError> {
    let t = forward_moments(spec, x1, x2)?;
    let layout = ParamLayout::of(spec)?;
    let shapes = &layout.plan.shapes;
    let depth = spec.layers.len();
    let mut adj: Vec<Vec<f64>> = shapes.iter().map(|s| alloc::vec![0.0; s.positions() * s.positions()]).collect();
    adj[depth] = readout_weights(spec.readout, shapes[depth]);
    let mut total = crate::math::dot(&adj[depth], &t[depth]);
    for l in (0..depth).rev() {
        let prev = shapes[l];
        let above = core::mem::take(&mut adj[l + 1]);
        match spec.layers[l] {
            layer @ (LayerSpec::Conv { .. } | LayerSpec::Dense | LayerSpec::Skip { .. }) => {
                let p = layout.layers[l].expect("weighted");
                let inner = layer.weighted_map().expect("weighted");
                let produced = weighted_forward(inner, &t[l], prev, p.fan_out, p.scale);
                total += crate::math::dot(&above, &produced);
                weighted_adjoint(inner, &above, prev, p.fan_out, p.scale, &mut adj[l]);
                if let LayerSpec::Skip { target, .. } = layer {
                    for (a, b) in adj[target].iter_mut().zip(&above) {
                        *a += b;
                    }
                }
            }
            LayerSpec::Gap => {
                let np = prev.positions();
                let share = above[0] / (np * np) as f64;
                adj[l].iter_mut().for_each(|a| *a += share);
            }
            LayerSpec::MaxPool { .. } => unreachable!("rejected by chain_count"),
        }
    }
    Ok(total)
}
