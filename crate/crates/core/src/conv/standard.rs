//! Stride-1, zero "same" padding convolution for any odd square kernel.

use rayon::prelude::*;

use super::ConvKernel;
use crate::error::{shape_err, Result};
use crate::tensor::{Shape4, Tensor4};

/// Input patches laid out `[n][ci·k·k + ky·k + kx][y·w + x]`; padding reads as zero.
fn im2col(input: &Tensor4, k: usize) -> Vec<f64> {
    let s = input.shape();
    let plane = s.plane();
    let pad = (k / 2) as isize;
    let mut cols = vec![0.0; s.n * s.c * k * k * plane];
    cols.par_chunks_mut(plane).enumerate().for_each(|(row, dst)| {
        let tap = row % (k * k);
        let ci = (row / (k * k)) % s.c;
        let n = row / (k * k * s.c);
        let dy = (tap / k) as isize - pad;
        let dx = (tap % k) as isize - pad;
        let src = input.plane(n, ci);
        let x0 = (-dx).max(0) as usize;
        let x1 = (s.w as isize - dx).clamp(0, s.w as isize) as usize;
        if x0 >= x1 {
            return;
        }
        for y in 0..s.h {
            let iy = y as isize + dy;
            if iy < 0 || iy >= s.h as isize {
                continue;
            }
            let from = iy as usize * s.w;
            let shifted = &src[(from as isize + x0 as isize + dx) as usize..(from as isize + x1 as isize + dx) as usize];
            dst[y * s.w + x0..y * s.w + x1].copy_from_slice(shifted);
        }
    });
    cols
}

/// `out[n,co,p] = bias[co] + Σ_t w[co,t] · cols[n,t,p]`, accumulated in `t` order.
///
/// `cols` holds `taps` rows of `h·w` values per batch item.
pub(crate) fn contract_columns(cols: &[f64], kernel: &ConvKernel, out_shape: Shape4, taps: usize) -> Tensor4 {
    let plane = out_shape.plane();
    let mut out = Tensor4::zeros(out_shape);
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(nc, dst)| {
            let (n, co) = (nc / out_shape.c, nc % out_shape.c);
            dst.fill(kernel.bias_at(co));
            let wts = &kernel.weight.data()[co * taps..][..taps];
            for (t, &wt) in wts.iter().enumerate() {
                let src = &cols[(n * taps + t) * plane..][..plane];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += wt * v;
                }
            }
        });
    out
}

/// Same-padding convolution; output has `kernel.out_channels()` channels and the
/// input's spatial dims.
///
/// Each output element accumulates `bias + Σ_ci Σ_ky Σ_kx w·x` in that order;
/// taps in the zero padding add `w·0`.
pub fn conv2d(input: &Tensor4, kernel: &ConvKernel) -> Result<Tensor4> {
    kernel.expect_input(input, "conv2d")?;
    let s = input.shape();
    let k = kernel.size();
    let out_shape = s.with_channels(kernel.out_channels());
    let taps = s.c * k * k;
    if k == 1 {
        return Ok(contract_columns(input.data(), kernel, out_shape, taps));
    }
    Ok(contract_columns(&im2col(input, k), kernel, out_shape, taps))
}

/// 3×3 convolution with padding 1.
pub fn conv2d_standard(input: &Tensor4, kernel: &ConvKernel) -> Result<Tensor4> {
    if kernel.size() != 3 {
        return shape_err(format!("standard convolution needs a 3x3 kernel, got {}", kernel.size()));
    }
    conv2d(input, kernel)
}

/// Gradients of [`conv2d`] with respect to its input and kernel.
pub fn conv2d_backward(
    input: &Tensor4,
    kernel: &ConvKernel,
    grad_output: &Tensor4,
) -> Result<(Tensor4, ConvKernel)> {
    kernel.expect_input(input, "conv2d_backward")?;
    let s = input.shape();
    let (co_n, k) = (kernel.out_channels(), kernel.size());
    grad_output.expect_shape(s.with_channels(co_n), "conv2d_backward grad_output")?;
    let pad = (k / 2) as isize;
    let (h, w) = (s.h as isize, s.w as isize);

    // dX[n,ci,y,x] = Σ_co Σ_taps w[co,ci,ky,kx] · dY[n,co,y-ky+pad,x-kx+pad]
    let mut grad_input = Tensor4::zeros(s);
    grad_input
        .data_mut()
        .par_chunks_mut(s.w)
        .enumerate()
        .for_each(|(row, dst)| {
            let y = (row % s.h) as isize;
            let ci = (row / s.h) % s.c;
            let n = row / (s.h * s.c);
            for co in 0..co_n {
                let g = grad_output.plane(n, co);
                let taps = kernel.taps(co, ci);
                for ky in 0..k {
                    let oy = y - ky as isize + pad;
                    if oy < 0 || oy >= h {
                        continue;
                    }
                    let src = &g[oy as usize * s.w..(oy as usize + 1) * s.w];
                    for kx in 0..k {
                        let wt = taps[ky * k + kx];
                        let dx = pad - kx as isize;
                        let x0 = (-dx).max(0);
                        let x1 = (w - dx).min(w);
                        for x in x0..x1 {
                            dst[x as usize] += wt * src[(x + dx) as usize];
                        }
                    }
                }
            }
        });

    let mut grad_kernel = ConvKernel::zeros(co_n, s.c, k);
    grad_kernel
        .weight
        .data_mut()
        .par_chunks_mut(k * k)
        .enumerate()
        .for_each(|(pair, dst)| {
            let (co, ci) = (pair / s.c, pair % s.c);
            for n in 0..s.n {
                let g = grad_output.plane(n, co);
                let xin = input.plane(n, ci);
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    let y0 = (-dy).max(0);
                    let y1 = (h - dy).min(h);
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let x0 = (-dx).max(0);
                        let x1 = (w - dx).min(w);
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let grow = &g[y as usize * s.w..];
                            let irow = &xin[(y + dy) as usize * s.w..];
                            for x in x0..x1 {
                                acc += grow[x as usize] * irow[(x + dx) as usize];
                            }
                        }
                        dst[ky * k + kx] += acc;
                    }
                }
            }
        });
    for co in 0..co_n {
        let mut acc = 0.0;
        for n in 0..s.n {
            acc += grad_output.plane(n, co).iter().sum::<f64>();
        }
        grad_kernel.bias.data_mut()[co] = acc;
    }
    Ok((grad_input, grad_kernel))
}
