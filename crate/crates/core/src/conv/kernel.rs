use rand::Rng;

use crate::error::{shape_err, Result};
use crate::params::{join, ParamSet};
use crate::tensor::{Shape4, Tensor4};

/// Square convolution weights (`out × in × k × k`, odd `k`) plus a per-output bias
/// stored as `1 × out × 1 × 1`.
///
/// The 3×3 instance is the tap bank shared by standard convolution and DcSConv:
/// the centre, the four edge centres and the four corners.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub weight: Tensor4,
    pub bias: Tensor4,
}

impl ConvKernel {
    pub fn new(weight: Tensor4, bias: Tensor4) -> Result<Self> {
        let w = weight.shape();
        if w.h != w.w || w.h % 2 == 0 {
            return shape_err(format!("kernel must be square with odd size, got {w}"));
        }
        if bias.shape() != Shape4::new(1, w.n, 1, 1) {
            return shape_err(format!(
                "bias must be 1x{}x1x1 for weights {w}, got {}",
                w.n,
                bias.shape()
            ));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, size: usize) -> Self {
        Self::new(
            Tensor4::zeros(Shape4::new(out_channels, in_channels, size, size)),
            Tensor4::zeros(Shape4::new(1, out_channels, 1, 1)),
        )
        .expect("odd size")
    }

    /// Uniform init in `±1/sqrt(fan_in)` for weights and bias.
    pub fn random(rng: &mut impl Rng, out_channels: usize, in_channels: usize, size: usize) -> Self {
        let bound = 1.0 / ((in_channels * size * size) as f64).sqrt();
        let mut k = Self::zeros(out_channels, in_channels, size);
        for v in k.weight.data_mut().iter_mut().chain(k.bias.data_mut()) {
            *v = rng.gen_range(-bound..bound);
        }
        k
    }

    /// Channel-preserving 3×3 kernel that passes its input through unchanged.
    pub fn identity(channels: usize) -> Self {
        let mut k = Self::zeros(channels, channels, 3);
        for c in 0..channels {
            k.weight.set(c, c, 1, 1, 1.0);
        }
        k
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.weight.shape().h
    }

    #[inline]
    pub fn bias_at(&self, out: usize) -> f64 {
        self.bias.data()[out]
    }

    /// The `k*k` taps of one (out, in) pair, row-major.
    #[inline]
    pub fn taps(&self, out: usize, input: usize) -> &[f64] {
        self.weight.plane(out, input)
    }

    pub(crate) fn expect_input(&self, input: &Tensor4, what: &str) -> Result<()> {
        if input.shape().c != self.in_channels() {
            return shape_err(format!(
                "{what}: kernel expects {} input channels, input has dims {}",
                self.in_channels(),
                input.shape()
            ));
        }
        Ok(())
    }
}

impl ParamSet for ConvKernel {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}
