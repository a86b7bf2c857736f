//! Closed-form NTK of a network with a single convolutional hidden layer.

use alloc::vec::Vec;

use super::spec::{LayerSpec, Readout};
use super::state::NetworkState;
use super::NnError;
use crate::math;
use crate::tensor::Image;

/// Input value seen by output position `(r, s)` at kernel offset `(dy, dx)`;
/// zero outside the image.
fn patch_value(x: &Image, r: usize, s: usize, dy: usize, dx: usize, kh: usize, kw: usize, c: usize) -> f64 {
    let shape = x.shape();
    let rr = r as isize + dy as isize - (kh / 2) as isize;
    let cc = s as isize + dx as isize - (kw / 2) as isize;
    if rr < 0 || cc < 0 || rr >= shape.height as isize || cc >= shape.width as isize {
        return 0.0;
    }
    x.data()[shape.index(rr as usize, cc as usize, c)]
}

struct Side {
    act: Vec<f64>,
    /// `B_{A,i} = sum_R c_{R,i} sigma'(z_{R,i}) X_{R,A}`, indexed `[A][i]`.
    b: Vec<f64>,
}

/// `Theta(x1, x2)` written as readout term plus first-layer term,
/// `s2^2 sum a a' + s1^2 sum_{A,i} (sum_R c sigma' X)(sum_S c' sigma' X')`,
/// evaluated index by index from the weights.
pub fn analytic_ohl_ntk(state: &NetworkState, x1: &Image, x2: &Image) -> Result<f64, NnError> {
    let spec = state.spec();
    let [LayerSpec::Conv { kw, kh }] = spec.layers[..] else {
        return Err(NnError::WrongArchitecture("expected exactly one conv layer"));
    };
    for x in [x1, x2] {
        if x.shape() != spec.input_shape {
            return Err(NnError::InputShape { expected: spec.input_shape, found: x.shape() });
        }
    }
    let shape = spec.input_shape;
    let (h, w, cin, n) = (shape.height, shape.width, shape.channels, spec.width);
    let positions = h * w;
    let u = state.layer_weights(0).expect("conv weights");
    let v = state.readout_weights();
    let s1 = 1.0 / math::sqrt((kw * kh * cin) as f64);
    let s2 = match spec.readout {
        Readout::Flatten => 1.0 / math::sqrt((positions * n) as f64),
        Readout::Gap => 1.0 / (positions as f64 * math::sqrt(n as f64)),
    };
    let sigma = spec.activation;
    let ka = kh * kw * cin;
    let uidx = |dy: usize, dx: usize, c: usize, i: usize| ((dy * kw + dx) * cin + c) * n + i;

    let side = |x: &Image| {
        let mut act = alloc::vec![0.0; positions * n];
        let mut b = alloc::vec![0.0; ka * n];
        for r in 0..h {
            for s in 0..w {
                let pos = r * w + s;
                for i in 0..n {
                    let mut z = 0.0;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            for c in 0..cin {
                                z += patch_value(x, r, s, dy, dx, kh, kw, c) * u[uidx(dy, dx, c, i)];
                            }
                        }
                    }
                    z *= s1;
                    act[pos * n + i] = sigma.apply(z);
                    let coeff = match spec.readout {
                        Readout::Flatten => s2 * v[pos * n + i],
                        Readout::Gap => s2 * v[i],
                    };
                    let weight = coeff * sigma.derivative(z);
                    for dy in 0..kh {
                        for dx in 0..kw {
                            for c in 0..cin {
                                b[((dy * kw + dx) * cin + c) * n + i] += weight * patch_value(x, r, s, dy, dx, kh, kw, c);
                            }
                        }
                    }
                }
            }
        }
        Side { act, b }
    };
    let a = side(x1);
    let b = side(x2);

    let v_term = match spec.readout {
        Readout::Flatten => s2 * s2 * math::dot(&a.act, &b.act),
        Readout::Gap => {
            let mut total = 0.0;
            for i in 0..n {
                let sa: f64 = (0..positions).map(|p| a.act[p * n + i]).sum();
                let sb: f64 = (0..positions).map(|p| b.act[p * n + i]).sum();
                total += (s2 * sa) * (s2 * sb);
            }
            total
        }
    };
    let u_term = s1 * s1 * math::dot(&a.b, &b.b);
    Ok(v_term + u_term)
}
