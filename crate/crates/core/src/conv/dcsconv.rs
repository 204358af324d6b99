//! Depth-converted-scale convolution.
//!
//! Each output pixel keeps the nine taps of a 3×3 kernel but spreads them by
//! `(k - 1) / 2` pixels, where `k` is that pixel's entry in the scale map. Taps
//! landing between grid points are read by bilinear interpolation with zero
//! padding, so `k = 3` is an ordinary 3×3 convolution and `k = 2d + 1` a
//! dilation-`d` one.

use rayon::prelude::*;

use super::standard::contract_columns;
use super::ConvKernel;
use crate::error::{shape_err, Result};
use crate::geometry::ScaleMap;
use crate::tensor::{BilinearTap, Tensor4};

/// Tap row/column offsets in kernel order.
const TAP_OFFSETS: [(f64, f64); 9] = [
    (-1.0, -1.0),
    (-1.0, 0.0),
    (-1.0, 1.0),
    (0.0, -1.0),
    (0.0, 0.0),
    (0.0, 1.0),
    (1.0, -1.0),
    (1.0, 0.0),
    (1.0, 1.0),
];

fn validate(input: &Tensor4, kernel: &ConvKernel, scale: &ScaleMap) -> Result<()> {
    if kernel.size() != 3 {
        return shape_err(format!("DcSConv needs a 3x3 kernel, got {}x{}", kernel.size(), kernel.size()));
    }
    kernel.expect_input(input, "dcsconv")?;
    let s = input.shape();
    let k = scale.values().shape();
    if k.n != s.n || k.h != s.h || k.w != s.w {
        return shape_err(format!("scale map dims {k} do not match input dims {s}"));
    }
    Ok(())
}

/// Bilinear lookups for every (batch, pixel, tap); shared across channels.
fn sampling_plan(scale: &ScaleMap) -> Vec<BilinearTap> {
    let k = scale.values();
    let s = k.shape();
    let mut plan = Vec::with_capacity(s.numel() * 9);
    for n in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let spread = (k.at(n, 0, y, x) - 1.0) / 2.0;
                for (i, j) in TAP_OFFSETS {
                    plan.push(BilinearTap::new(
                        s.h,
                        s.w,
                        y as f64 + i * spread,
                        x as f64 + j * spread,
                    ));
                }
            }
        }
    }
    plan
}

/// Sampled inputs laid out `[n][ci·9 + tap][y·w + x]`.
fn gather_samples(input: &Tensor4, plan: &[BilinearTap]) -> Vec<f64> {
    let s = input.shape();
    let plane = s.plane();
    let mut cols = vec![0.0; s.n * s.c * 9 * plane];
    cols.par_chunks_mut(plane).enumerate().for_each(|(row, dst)| {
        let t = row % 9;
        let ci = (row / 9) % s.c;
        let n = row / (9 * s.c);
        let src = input.plane(n, ci);
        let taps = &plan[n * plane * 9..][..plane * 9];
        for (p, d) in dst.iter_mut().enumerate() {
            *d = taps[p * 9 + t].sample(src);
        }
    });
    cols
}

pub fn dcsconv_forward(input: &Tensor4, kernel: &ConvKernel, scale: &ScaleMap) -> Result<Tensor4> {
    validate(input, kernel, scale)?;
    let s = input.shape();
    let plan = sampling_plan(scale);
    let cols = gather_samples(input, &plan);
    Ok(contract_columns(&cols, kernel, s.with_channels(kernel.out_channels()), s.c * 9))
}

/// Whether [`dcsconv_backward`] differentiates through the scale map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleGradient {
    /// The scale map is fixed guidance (derived from a depth map).
    Detached,
    /// The scale map is a learned quantity and needs a gradient.
    Propagate,
}

#[derive(Debug, Clone)]
pub struct DcsConvGrads {
    pub input: Tensor4,
    /// Weight and bias gradients.
    pub kernel: ConvKernel,
    /// `n×1×h×w`, present only for [`ScaleGradient::Propagate`].
    pub scale: Option<Tensor4>,
}

/// Gradients of [`dcsconv_forward`] in a single pass.
///
/// The input gradient scatters each tap's corner weights; the scale gradient
/// chains `d(offset)/dk = (i/2, j/2)` through the bilinear spatial derivative.
/// Not differentiable where a tap coordinate is an integer (odd `k`); there the
/// one-sided derivative from the cell above/left of the sample is returned.
pub fn dcsconv_backward(
    input: &Tensor4,
    kernel: &ConvKernel,
    scale: &ScaleMap,
    grad_output: &Tensor4,
    scale_grad: ScaleGradient,
) -> Result<DcsConvGrads> {
    validate(input, kernel, scale)?;
    let s = input.shape();
    let co_n = kernel.out_channels();
    grad_output.expect_shape(s.with_channels(co_n), "dcsconv_backward grad_output")?;
    let plan = sampling_plan(scale);
    let want_scale = scale_grad == ScaleGradient::Propagate;

    let mut grad_input = Tensor4::zeros(s);
    let mut grad_kernel = ConvKernel::zeros(co_n, s.c, 3);
    let mut grad_scale = Tensor4::zeros(scale.values().shape());
    let plane = s.plane();

    for n in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let pix = (n * s.h + y) * s.w + x;
                let taps = &plan[pix * 9..][..9];
                let mut dk = 0.0;
                for co in 0..co_n {
                    let g = grad_output.at(n, co, y, x);
                    if g == 0.0 {
                        continue;
                    }
                    grad_kernel.bias.data_mut()[co] += g;
                    for ci in 0..s.c {
                        let src = input.plane(n, ci);
                        let wts = kernel.taps(co, ci);
                        let gw_off = (co * s.c + ci) * 9;
                        let gi_off = (n * s.c + ci) * plane;
                        for (t, tap) in taps.iter().enumerate() {
                            grad_kernel.weight.data_mut()[gw_off + t] += g * tap.sample(src);
                            let gwt = g * wts[t];
                            let cw = tap.weights();
                            let gi = grad_input.data_mut();
                            for c in 0..4 {
                                if let Some(i) = tap.corners[c] {
                                    gi[gi_off + i] += gwt * cw[c];
                                }
                            }
                            if want_scale {
                                let (oi, oj) = TAP_OFFSETS[t];
                                let dy = tap.contract(src, &tap.dweights_dy());
                                let dx = tap.contract(src, &tap.dweights_dx());
                                dk += gwt * 0.5 * (oi * dy + oj * dx);
                            }
                        }
                    }
                }
                grad_scale.data_mut()[pix] = dk;
            }
        }
    }

    Ok(DcsConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        scale: want_scale.then_some(grad_scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{conv2d_backward, conv2d_naive_oracle, conv2d_standard};
    use crate::geometry::ScaleConversion;
    use crate::rng::{uniform_tensor, SeedStream};
    use crate::tensor::Shape4;

    fn conversion() -> ScaleConversion {
        ScaleConversion::standard(1.0).unwrap()
    }

    fn instance(seed: u64, shape: Shape4, c_out: usize) -> (Tensor4, ConvKernel) {
        let mut rng = SeedStream::new(seed).rng("dcs-instance");
        let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let k = ConvKernel::random(&mut rng, c_out, shape.c, 3);
        (x, k)
    }

    #[test]
    fn scale_three_is_standard_conv() {
        let (x, k) = instance(10, Shape4::new(2, 3, 7, 6), 4);
        let sm = ScaleMap::constant(2, 7, 6, 3.0, conversion()).unwrap();
        let a = dcsconv_forward(&x, &k, &sm).unwrap();
        let b = conv2d_standard(&x, &k).unwrap();
        assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn scale_five_is_dilation_two() {
        let (x, k) = instance(11, Shape4::new(1, 2, 8, 9), 3);
        let sm = ScaleMap::constant(1, 8, 9, 5.0, conversion()).unwrap();
        let a = dcsconv_forward(&x, &k, &sm).unwrap();
        let b = conv2d_naive_oracle(&x, &k, 2).unwrap();
        assert!(a.max_rel_diff(&b).unwrap() <= 1e-12);
    }

    #[test]
    fn scale_one_collapses_to_center() {
        let (x, k) = instance(12, Shape4::new(1, 2, 4, 5), 2);
        let sm = ScaleMap::constant(1, 4, 5, 1.0, conversion()).unwrap();
        let a = dcsconv_forward(&x, &k, &sm).unwrap();
        let expect = Tensor4::from_fn(a.shape(), |n, co, y, xx| {
            k.bias_at(co) + (0..2).map(|ci| k.taps(co, ci).iter().sum::<f64>() * x.at(n, ci, y, xx)).sum::<f64>()
        });
        assert!(a.max_rel_diff(&expect).unwrap() <= 1e-12);
    }

    #[test]
    fn fractional_scale_on_constant_input() {
        // k = 2.5 spreads taps by 0.75. At the (0, 0) corner the row/column
        // offset -0.75 keeps only its 0.25 in-grid bilinear share; offsets 0 and
        // +0.75 keep all of it. So the corner sees v·Σ w_ij r_i r_j with
        // r = (0.25, 1, 1): with unit weights 2·(2.25)² = 10.125.
        let mut k = ConvKernel::zeros(1, 1, 3);
        k.weight.fill(1.0);
        let x = Tensor4::full(Shape4::new(1, 1, 6, 6), 2.0);
        let sm = ScaleMap::constant(1, 6, 6, 2.5, conversion()).unwrap();
        let y = dcsconv_forward(&x, &k, &sm).unwrap();
        assert!((y.at(0, 0, 0, 0) - 10.125).abs() < 1e-12);
        assert!((y.at(0, 0, 0, 3) - 2.0 * 2.25 * 3.0).abs() < 1e-12);
        for yy in 1..5 {
            for xx in 1..5 {
                assert!((y.at(0, 0, yy, xx) - 18.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_and_kernel_errors() {
        let (x, k) = instance(13, Shape4::new(1, 2, 4, 4), 1);
        let bad = ScaleMap::constant(1, 4, 5, 3.0, conversion()).unwrap();
        assert!(matches!(dcsconv_forward(&x, &k, &bad), Err(crate::Error::Shape(_))));
        let sm = ScaleMap::constant(1, 4, 4, 3.0, conversion()).unwrap();
        assert!(dcsconv_forward(&x, &ConvKernel::zeros(1, 2, 5), &sm).is_err());
        let g = Tensor4::zeros(Shape4::new(1, 2, 4, 4));
        assert!(dcsconv_backward(&x, &k, &sm, &g, ScaleGradient::Detached).is_err());
    }

    #[test]
    fn zero_grad_output_gives_zero_grads() {
        let (x, k) = instance(14, Shape4::new(1, 2, 5, 5), 2);
        let sm = ScaleMap::constant(1, 5, 5, 2.7, conversion()).unwrap();
        let g = Tensor4::zeros(Shape4::new(1, 2, 5, 5));
        let grads = dcsconv_backward(&x, &k, &sm, &g, ScaleGradient::Propagate).unwrap();
        assert_eq!(grads.input.max_abs(), 0.0);
        assert_eq!(grads.kernel.weight.max_abs(), 0.0);
        assert_eq!(grads.kernel.bias.max_abs(), 0.0);
        assert_eq!(grads.scale.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn scale_three_backward_matches_standard() {
        let (x, k) = instance(15, Shape4::new(2, 3, 6, 5), 2);
        let sm = ScaleMap::constant(2, 6, 5, 3.0, conversion()).unwrap();
        let mut rng = SeedStream::new(15).rng("g");
        let g = uniform_tensor(&mut rng, Shape4::new(2, 2, 6, 5), -1.0, 1.0);
        let d = dcsconv_backward(&x, &k, &sm, &g, ScaleGradient::Detached).unwrap();
        assert!(d.scale.is_none());
        let (gx, gk) = conv2d_backward(&x, &k, &g).unwrap();
        assert!(d.input.max_abs_diff(&gx).unwrap() < 1e-12);
        assert!(d.kernel.weight.max_abs_diff(&gk.weight).unwrap() < 1e-12);
        assert!(d.kernel.bias.max_abs_diff(&gk.bias).unwrap() < 1e-12);

        // grad_input is also the correlation of grad_output with the flipped,
        // channel-transposed kernel
        let mut flipped = ConvKernel::zeros(3, 2, 3);
        for co in 0..2 {
            for ci in 0..3 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        flipped.weight.set(ci, co, 2 - ky, 2 - kx, k.weight.at(co, ci, ky, kx));
                    }
                }
            }
        }
        let via_oracle = conv2d_naive_oracle(&g, &flipped, 1).unwrap();
        assert!(d.input.max_abs_diff(&via_oracle).unwrap() < 1e-12);
    }

    #[test]
    fn linear_in_input() {
        let (a, mut k) = instance(16, Shape4::new(1, 2, 6, 6), 2);
        k.bias.fill(0.0);
        let (b, _) = instance(17, Shape4::new(1, 2, 6, 6), 2);
        let mut rng = SeedStream::new(16).rng("scale");
        let vals = uniform_tensor(&mut rng, Shape4::new(1, 1, 6, 6), 1.0, 9.0);
        let sm = ScaleMap::new(vals, conversion()).unwrap();
        let (alpha, beta) = (0.7, -1.3);
        let combo = a.zip_map(&b, |p, q| alpha * p + beta * q).unwrap();
        let lhs = dcsconv_forward(&combo, &k, &sm).unwrap();
        let fa = dcsconv_forward(&a, &k, &sm).unwrap();
        let fb = dcsconv_forward(&b, &k, &sm).unwrap();
        let rhs = fa.zip_map(&fb, |p, q| alpha * p + beta * q).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }
}
