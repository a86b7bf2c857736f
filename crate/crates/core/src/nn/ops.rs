//! Dense kernels shared by the forward and backward passes.

use alloc::vec::Vec;

use crate::tensor::Shape;

/// Row-major matrix view: `rows x cols`, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` with `c` row-major `m x n`.
pub(crate) fn gemm(alpha: f64, a: Mat, ta: bool, b: Mat, tb: bool, beta: f64, c: &mut [f64]) {
    let (m, k, rsa, csa) = if ta { (a.cols, a.rows, 1, a.cols) } else { (a.rows, a.cols, a.cols, 1) };
    let (kb, n, rsb, csb) = if tb { (b.cols, b.rows, 1, b.cols) } else { (b.rows, b.cols, b.cols, 1) };
    assert_eq!(k, kb, "inner dimensions differ");
    assert_eq!(c.len(), m * n, "output has the wrong size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the strides describe `a`, `b`, `c` exactly and the lengths were
    // checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Patch matrix (`positions x kh*kw*channels`) for a SAME-padded stride-1
/// convolution. Column order is `(dy, dx, channel)`.
pub(crate) fn im2col(input: &[f64], shape: Shape, kw: usize, kh: usize) -> Vec<f64> {
    let c = shape.channels;
    let k = kw * kh * c;
    let mut out = alloc::vec![0.0; shape.positions() * k];
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    for r in 0..shape.height {
        for s in 0..shape.width {
            let row = &mut out[(r * shape.width + s) * k..][..k];
            for dy in 0..kh {
                let rr = r as isize + dy as isize - ry;
                if rr < 0 || rr >= shape.height as isize {
                    continue;
                }
                for dx in 0..kw {
                    let cc = s as isize + dx as isize - rx;
                    if cc < 0 || cc >= shape.width as isize {
                        continue;
                    }
                    let src = shape.index(rr as usize, cc as usize, 0);
                    row[(dy * kw + dx) * c..][..c].copy_from_slice(&input[src..src + c]);
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back onto the image.
pub(crate) fn col2im_add(cols: &[f64], shape: Shape, kw: usize, kh: usize, out: &mut [f64]) {
    let c = shape.channels;
    let k = kw * kh * c;
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    for r in 0..shape.height {
        for s in 0..shape.width {
            let row = &cols[(r * shape.width + s) * k..][..k];
            for dy in 0..kh {
                let rr = r as isize + dy as isize - ry;
                if rr < 0 || rr >= shape.height as isize {
                    continue;
                }
                for dx in 0..kw {
                    let cc = s as isize + dx as isize - rx;
                    if cc < 0 || cc >= shape.width as isize {
                        continue;
                    }
                    let dst = shape.index(rr as usize, cc as usize, 0);
                    for (o, v) in out[dst..dst + c].iter_mut().zip(&row[(dy * kw + dx) * c..][..c]) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Per-channel sums over spatial positions.
pub(crate) fn channel_sums(act: &[f64], channels: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; channels];
    for px in act.chunks_exact(channels) {
        for (o, v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    out
}
