//! Learned-scale convolution: a small head predicts a positive depth from the
//! input features, maps it to a filter size, and the result drives DcSConv.

use rand::Rng;

use super::{conv2d, conv2d_backward, dcsconv_backward, dcsconv_forward, ConvKernel, ScaleGradient};
use crate::error::{shape_err, Result};
use crate::geometry::{ScaleConversion, ScaleMap};
use crate::params::{join, ParamSet};
use crate::tensor::{Shape4, Tensor4};

pub const DEFAULT_DEPTH_EPSILON: f64 = 1e-3;

/// Depth → scale stage of the head.
#[derive(Debug, Clone, PartialEq)]
pub enum DepthToScale {
    /// Fixed `k_r · D_r / depth` from the head's conversion.
    Geometric,
    /// Learned `gain · depth + offset`, stored as a `1×1×1×2` tensor `[gain, offset]`.
    Affine { coeffs: Tensor4 },
}

impl DepthToScale {
    pub fn affine(gain: f64, offset: f64) -> Self {
        DepthToScale::Affine {
            coeffs: Tensor4::from_vec(Shape4::new(1, 1, 1, 2), vec![gain, offset]).expect("finite coefficients"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleHeadParams {
    /// `1×1` projection, `in_channels → 1`.
    pub projection: ConvKernel,
    pub mapping: DepthToScale,
    /// Clamp range, plus `k_r` and `D_r` for [`DepthToScale::Geometric`].
    pub conversion: ScaleConversion,
    /// Added after softplus so the learned depth is strictly positive.
    pub epsilon: f64,
}

impl ScaleHeadParams {
    pub fn new(projection: ConvKernel, mapping: DepthToScale, conversion: ScaleConversion, epsilon: f64) -> Result<Self> {
        if projection.size() != 1 || projection.out_channels() != 1 {
            return shape_err(format!(
                "scale head projection must be a 1x1 conv to one channel, got {}",
                projection.weight.shape()
            ));
        }
        if !(epsilon > 0.0) {
            return Err(crate::Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
        }
        conversion.validate()?;
        Ok(Self {
            projection,
            mapping,
            conversion,
            epsilon,
        })
    }

    pub fn random(rng: &mut impl Rng, in_channels: usize, mapping: DepthToScale, conversion: ScaleConversion) -> Result<Self> {
        Self::new(ConvKernel::random(rng, 1, in_channels, 1), mapping, conversion, DEFAULT_DEPTH_EPSILON)
    }
}

impl ParamSet for ScaleHeadParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>) {
        self.projection.visit(&join(prefix, "projection"), out);
        if let DepthToScale::Affine { coeffs } = &self.mapping {
            out.push((join(prefix, "affine"), coeffs));
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>) {
        self.projection.visit_mut(&join(prefix, "projection"), out);
        if let DepthToScale::Affine { coeffs } = &mut self.mapping {
            out.push((join(prefix, "affine"), coeffs));
        }
    }
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct HeadTrace {
    pre_activation: Tensor4,
    depth: Tensor4,
    raw_scale: Tensor4,
    scale: ScaleMap,
}

fn run_head(input: &Tensor4, head: &ScaleHeadParams) -> Result<HeadTrace> {
    head.projection.expect_input(input, "glsconv head")?;
    let pre_activation = conv2d(input, &head.projection)?;
    let depth = pre_activation.map(|z| softplus(z) + head.epsilon);
    let c = &head.conversion;
    let raw_scale = match &head.mapping {
        DepthToScale::Geometric => {
            let kr_dr = c.base_kernel * c.reference_depth;
            depth.map(|d| kr_dr / d)
        }
        DepthToScale::Affine { coeffs } => {
            let (gain, offset) = (coeffs.data()[0], coeffs.data()[1]);
            depth.map(|d| gain * d + offset)
        }
    };
    let scale = ScaleMap::new(raw_scale.map(|k| c.clamp(k)), *c)?;
    Ok(HeadTrace {
        pre_activation,
        depth,
        raw_scale,
        scale,
    })
}

/// Learned-scale convolution; also returns the scale map the head produced.
pub fn glsconv_forward(input: &Tensor4, kernel: &ConvKernel, head: &ScaleHeadParams) -> Result<(Tensor4, ScaleMap)> {
    let trace = run_head(input, head)?;
    let out = dcsconv_forward(input, kernel, &trace.scale)?;
    Ok((out, trace.scale))
}

#[derive(Debug, Clone)]
pub struct GlsConvGrads {
    pub input: Tensor4,
    pub kernel: ConvKernel,
    pub head: ScaleHeadParams,
}

/// End-to-end gradients of [`glsconv_forward`], including the path through the
/// learned scale map. Clamped pixels pass no gradient to the head.
pub fn glsconv_backward(
    input: &Tensor4,
    kernel: &ConvKernel,
    head: &ScaleHeadParams,
    grad_output: &Tensor4,
) -> Result<GlsConvGrads> {
    let trace = run_head(input, head)?;
    let dcs = dcsconv_backward(input, kernel, &trace.scale, grad_output, ScaleGradient::Propagate)?;
    let grad_scale = dcs.scale.expect("scale gradient requested");
    let c = &head.conversion;

    let mut grad_head = head.clone();
    let mut d_gain = 0.0;
    let mut d_offset = 0.0;
    let mut grad_pre = Tensor4::zeros(trace.pre_activation.shape());
    for i in 0..grad_pre.len() {
        let raw = trace.raw_scale.data()[i];
        if !(raw > c.scale_min && raw < c.scale_max) {
            continue;
        }
        let gk = grad_scale.data()[i];
        let d = trace.depth.data()[i];
        let gd = match &head.mapping {
            DepthToScale::Geometric => -gk * c.base_kernel * c.reference_depth / (d * d),
            DepthToScale::Affine { coeffs } => {
                d_gain += gk * d;
                d_offset += gk;
                gk * coeffs.data()[0]
            }
        };
        grad_pre.data_mut()[i] = gd * sigmoid(trace.pre_activation.data()[i]);
    }
    if let DepthToScale::Affine { coeffs } = &mut grad_head.mapping {
        coeffs.data_mut().copy_from_slice(&[d_gain, d_offset]);
    }
    let (grad_in_head, grad_proj) = conv2d_backward(input, &head.projection, &grad_pre)?;
    grad_head.projection = grad_proj;

    let mut grad_input = dcs.input;
    grad_input.axpy(1.0, &grad_in_head)?;
    Ok(GlsConvGrads {
        input: grad_input,
        kernel: dcs.kernel,
        head: grad_head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::conv2d_standard;
    use crate::rng::{uniform_tensor, SeedStream};

    #[test]
    fn constant_scale_three_reduces_to_standard() {
        let mut rng = SeedStream::new(30).rng("gls");
        let x = uniform_tensor(&mut rng, Shape4::new(1, 2, 6, 6), -1.0, 1.0);
        let k = ConvKernel::random(&mut rng, 3, 2, 3);
        let conv = ScaleConversion::standard(1.0).unwrap();
        let head = ScaleHeadParams::random(&mut rng, 2, DepthToScale::affine(0.0, 3.0), conv).unwrap();
        let (out, scale) = glsconv_forward(&x, &k, &head).unwrap();
        assert!(scale.values().data().iter().all(|&v| v == 3.0));
        assert!(out.bitwise_eq(&conv2d_standard(&x, &k).unwrap()));
    }

    #[test]
    fn learned_scale_is_positive_and_clamped() {
        let mut rng = SeedStream::new(31).rng("gls");
        // large inputs drive the projection to both tails of softplus
        let x = uniform_tensor(&mut rng, Shape4::new(2, 3, 5, 5), -200.0, 200.0);
        let k = ConvKernel::random(&mut rng, 1, 3, 3);
        let conv = ScaleConversion::new(3.0, 2.0, 1.5, 7.0).unwrap();
        let head = ScaleHeadParams::random(&mut rng, 3, DepthToScale::Geometric, conv).unwrap();
        let trace = run_head(&x, &head).unwrap();
        assert!(trace.depth.data().iter().all(|&d| d >= head.epsilon));
        let (_, scale) = glsconv_forward(&x, &k, &head).unwrap();
        assert!(scale.values().data().iter().all(|&s| (1.5..=7.0).contains(&s)));
        assert!(scale.values().min() == 1.5 || scale.values().max() == 7.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn head_shape_validation() {
        let conv = ScaleConversion::standard(1.0).unwrap();
        assert!(ScaleHeadParams::new(ConvKernel::zeros(1, 2, 3), DepthToScale::Geometric, conv, 1e-3).is_err());
        assert!(ScaleHeadParams::new(ConvKernel::zeros(2, 2, 1), DepthToScale::Geometric, conv, 1e-3).is_err());
        assert!(ScaleHeadParams::new(ConvKernel::zeros(1, 2, 1), DepthToScale::Geometric, conv, 0.0).is_err());
    }
}
