//! Forward and reverse passes.

use alloc::vec::Vec;

use super::ops::{channel_sums, col2im_add, gemm, im2col, Mat};
use super::spec::{Inner, LayerSpec, Readout};
use super::state::{LayerParams, NetworkState};
use super::NnError;
use crate::tensor::{Image, Shape};

/// Activations and pre-activations of one example.
#[derive(Clone, Debug)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pub pre: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    pub output: f64,
}

/// Activations plus backpropagated pre-activation gradients: everything the
/// parameter gradient and the NTK need for one example.
#[derive(Clone, Debug)]
pub struct Sensitivity {
    pub acts: Vec<Vec<f64>>,
    /// `d seed*f / d pre[l]` for weighted layers, empty for the rest.
    pub grad_pre: Vec<Vec<f64>>,
    pub output: f64,
    /// The reverse-pass seed `d loss / d f`.
    pub seed: f64,
}

fn check_input(state: &NetworkState, x: &Image) -> Result<(), NnError> {
    let expected = state.spec().input_shape;
    if x.shape() != expected {
        return Err(NnError::InputShape { expected, found: x.shape() });
    }
    Ok(())
}

fn weighted_forward(inner: Inner, p: LayerParams, w: &[f64], input: &[f64], prev: Shape, out: &mut [f64]) {
    match inner {
        Inner::Conv { kw, kh } => {
            let patches = im2col(input, prev, kw, kh);
            gemm(
                p.scale,
                Mat::new(&patches, prev.positions(), p.fan_in),
                false,
                Mat::new(w, p.fan_in, p.fan_out),
                false,
                0.0,
                out,
            );
        }
        Inner::Dense => {
            gemm(p.scale, Mat::new(input, 1, p.fan_in), false, Mat::new(w, p.fan_in, p.fan_out), false, 0.0, out);
        }
    }
}

/// Forward pass keeping every intermediate value.
pub fn trace(state: &NetworkState, x: &Image) -> Result<Trace, NnError> {
    check_input(state, x)?;
    let spec = state.spec();
    let shapes = &state.plan().shapes;
    let sigma = spec.activation;
    let depth = spec.layers.len();
    let mut acts = Vec::with_capacity(depth + 1);
    let mut pre = Vec::with_capacity(depth);
    let mut argmax = Vec::with_capacity(depth);
    acts.push(x.data().to_vec());
    for (l, layer) in spec.layers.iter().enumerate() {
        let prev = shapes[l];
        let next = shapes[l + 1];
        let input = &acts[l];
        let mut z = alloc::vec![0.0; next.len()];
        let mut arg = Vec::new();
        match *layer {
            LayerSpec::Conv { .. } | LayerSpec::Dense | LayerSpec::Skip { .. } => {
                let p = state.layer_params(l).expect("weighted layer");
                let w = state.layer_weights(l).expect("weighted layer");
                weighted_forward(layer.weighted_map().expect("weighted"), p, w, input, prev, &mut z);
                if let LayerSpec::Skip { target, .. } = *layer {
                    for (zi, ai) in z.iter_mut().zip(&acts[target]) {
                        *zi += ai;
                    }
                }
            }
            LayerSpec::Gap => {
                let inv = 1.0 / prev.positions() as f64;
                for (zi, s) in z.iter_mut().zip(channel_sums(input, prev.channels)) {
                    *zi = s * inv;
                }
            }
            LayerSpec::MaxPool { size, stride } => {
                arg = alloc::vec![0; next.len()];
                for r in 0..next.height {
                    for s in 0..next.width {
                        for c in 0..next.channels {
                            let mut best = prev.index(r * stride, s * stride, c);
                            for dy in 0..size {
                                for dx in 0..size {
                                    let i = prev.index(r * stride + dy, s * stride + dx, c);
                                    if input[i] > input[best] {
                                        best = i;
                                    }
                                }
                            }
                            let o = next.index(r, s, c);
                            z[o] = input[best];
                            arg[o] = best;
                        }
                    }
                }
            }
        }
        let a: Vec<f64> = z.iter().map(|&v| sigma.apply(v)).collect();
        pre.push(z);
        argmax.push(arg);
        acts.push(a);
    }
    let last = acts.last().expect("input activation");
    let out_shape = state.plan().output();
    let rp = state.readout_params();
    let v = state.readout_weights();
    let output = match spec.readout {
        Readout::Flatten => rp.scale * crate::math::dot(v, last),
        Readout::Gap => rp.scale * crate::math::dot(v, &channel_sums(last, out_shape.channels)),
    };
    Ok(Trace { acts, pre, argmax, output })
}

/// Reverse pass seeded with `d loss / d f = seed`.
pub fn backward(state: &NetworkState, trace: Trace, seed: f64) -> Sensitivity {
    let spec = state.spec();
    let shapes = &state.plan().shapes;
    let sigma = spec.activation;
    let depth = spec.layers.len();
    let Trace { acts, pre, argmax, output } = trace;
    let mut g_act: Vec<Vec<f64>> = shapes.iter().map(|s| alloc::vec![0.0; s.len()]).collect();
    let out_shape = state.plan().output();
    let rp = state.readout_params();
    let v = state.readout_weights();
    match spec.readout {
        Readout::Flatten => {
            for (g, w) in g_act[depth].iter_mut().zip(v) {
                *g = seed * rp.scale * w;
            }
        }
        Readout::Gap => {
            for px in g_act[depth].chunks_exact_mut(out_shape.channels) {
                for (g, w) in px.iter_mut().zip(v) {
                    *g = seed * rp.scale * w;
                }
            }
        }
    }
    let mut grad_pre = alloc::vec![Vec::new(); depth];
    for l in (0..depth).rev() {
        let prev = shapes[l];
        let mut gz = core::mem::take(&mut g_act[l + 1]);
        for (g, &z) in gz.iter_mut().zip(&pre[l]) {
            *g *= sigma.derivative(z);
        }
        let layer = spec.layers[l];
        match layer {
            LayerSpec::Conv { .. } | LayerSpec::Dense | LayerSpec::Skip { .. } => {
                let p = state.layer_params(l).expect("weighted layer");
                let w = state.layer_weights(l).expect("weighted layer");
                if let LayerSpec::Skip { target, .. } = layer {
                    for (g, d) in g_act[target].iter_mut().zip(&gz) {
                        *g += d;
                    }
                }
                if l > 0 {
                    match layer.weighted_map().expect("weighted") {
                        Inner::Conv { kw, kh } => {
                            let mut gp = alloc::vec![0.0; prev.positions() * p.fan_in];
                            gemm(
                                p.scale,
                                Mat::new(&gz, prev.positions(), p.fan_out),
                                false,
                                Mat::new(w, p.fan_in, p.fan_out),
                                true,
                                0.0,
                                &mut gp,
                            );
                            col2im_add(&gp, prev, kw, kh, &mut g_act[l]);
                        }
                        Inner::Dense => {
                            gemm(
                                p.scale,
                                Mat::new(w, p.fan_in, p.fan_out),
                                false,
                                Mat::new(&gz, p.fan_out, 1),
                                false,
                                1.0,
                                &mut g_act[l],
                            );
                        }
                    }
                }
                grad_pre[l] = gz;
            }
            LayerSpec::Gap => {
                let inv = 1.0 / prev.positions() as f64;
                for px in g_act[l].chunks_exact_mut(prev.channels) {
                    for (g, d) in px.iter_mut().zip(&gz) {
                        *g += d * inv;
                    }
                }
            }
            LayerSpec::MaxPool { .. } => {
                for (&i, d) in argmax[l].iter().zip(&gz) {
                    g_act[l][i] += d;
                }
            }
        }
    }
    Sensitivity { acts, grad_pre, output, seed }
}

/// `trace` followed by `backward` with seed 1.
pub fn sensitivity(state: &NetworkState, x: &Image) -> Result<Sensitivity, NnError> {
    Ok(backward(state, trace(state, x)?, 1.0))
}

pub fn forward_one(state: &NetworkState, x: &Image) -> Result<f64, NnError> {
    Ok(trace(state, x)?.output)
}

pub fn forward(state: &NetworkState, batch: &[Image]) -> Result<Vec<f64>, NnError> {
    batch.iter().map(|x| forward_one(state, x)).collect()
}

/// Write (or add, with `beta = 1`) the parameter gradient carried by `sens`
/// into the flat vector `out`.
pub(crate) fn write_gradient(state: &NetworkState, sens: &Sensitivity, beta: f64, out: &mut [f64]) {
    let spec = state.spec();
    let shapes = &state.plan().shapes;
    for (l, layer) in spec.layers.iter().enumerate() {
        let Some(p) = state.layer_params(l) else { continue };
        let dst = &mut out[p.offset..p.offset + p.len];
        weight_slice(layer.weighted_map().expect("weighted"), p, &sens.acts[l], &sens.grad_pre[l], shapes[l], beta, dst);
    }
    let rp = state.readout_params();
    let dst = &mut out[rp.offset..rp.offset + rp.len];
    let last = sens.acts.last().expect("activation");
    let scaled = |v: f64| sens.seed * rp.scale * v;
    match spec.readout {
        Readout::Flatten => {
            for (o, &a) in dst.iter_mut().zip(last) {
                *o = beta * *o + scaled(a);
            }
        }
        Readout::Gap => {
            let sums = channel_sums(last, state.plan().output().channels);
            for (o, s) in dst.iter_mut().zip(sums) {
                *o = beta * *o + scaled(s);
            }
        }
    }
}

/// Gradient of one weighted layer, `fan_in x fan_out`.
pub(crate) fn weight_slice(
    inner: Inner,
    p: LayerParams,
    input: &[f64],
    gz: &[f64],
    prev: Shape,
    beta: f64,
    out: &mut [f64],
) {
    match inner {
        Inner::Conv { kw, kh } => {
            let patches = im2col(input, prev, kw, kh);
            gemm(
                p.scale,
                Mat::new(&patches, prev.positions(), p.fan_in),
                true,
                Mat::new(gz, prev.positions(), p.fan_out),
                false,
                beta,
                out,
            );
        }
        Inner::Dense => {
            gemm(p.scale, Mat::new(input, p.fan_in, 1), false, Mat::new(gz, 1, p.fan_out), false, beta, out);
        }
    }
}

/// Exact `d f(x) / d theta` in the flat parameter layout.
pub fn gradient(state: &NetworkState, x: &Image) -> Result<Vec<f64>, NnError> {
    let sens = sensitivity(state, x)?;
    let mut g = alloc::vec![0.0; state.param_count()];
    write_gradient(state, &sens, 0.0, &mut g);
    Ok(g)
}

/// Outputs on `xs` and the gradient of `1/2 sum (f(x_a) - y_a)^2`.
pub fn loss_gradient(state: &NetworkState, xs: &[Image], ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    assert_eq!(xs.len(), ys.len());
    let mut g = alloc::vec![0.0; state.param_count()];
    let mut outputs = Vec::with_capacity(xs.len());
    for (x, &y) in xs.iter().zip(ys) {
        let t = trace(state, x)?;
        let f = t.output;
        outputs.push(f);
        let sens = backward(state, t, f - y);
        write_gradient(state, &sens, 1.0, &mut g);
    }
    Ok((outputs, g))
}
