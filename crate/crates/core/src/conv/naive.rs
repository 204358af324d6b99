use super::ConvKernel;
use crate::error::{domain_err, Result};
use crate::tensor::Tensor4;

/// Reference convolution by direct nested loops.
///
/// Taps are spaced `dilation` pixels apart, padding is zero and the output keeps
/// the input's spatial dims. Shares no code with the optimized paths and is only
/// meant for verification.
pub fn conv2d_naive_oracle(input: &Tensor4, kernel: &ConvKernel, dilation: usize) -> Result<Tensor4> {
    if dilation == 0 {
        return domain_err("dilation must be >= 1");
    }
    kernel.expect_input(input, "conv2d_naive_oracle")?;
    let s = input.shape();
    let k = kernel.size() as isize;
    let half = k / 2;
    let dil = dilation as isize;
    let mut out = Tensor4::zeros(s.with_channels(kernel.out_channels()));
    for n in 0..s.n {
        for co in 0..kernel.out_channels() {
            for y in 0..s.h as isize {
                for x in 0..s.w as isize {
                    let mut acc = kernel.bias.at(0, co, 0, 0);
                    for ci in 0..s.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y + (ky - half) * dil;
                                let ix = x + (kx - half) * dil;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += kernel.weight.at(co, ci, ky as usize, kx as usize)
                                    * input.at(n, ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.set(n, co, y as usize, x as usize, acc);
                }
            }
        }
    }
    Ok(out)
}
