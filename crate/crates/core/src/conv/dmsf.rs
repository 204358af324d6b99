//! Depth-converted multiple-scale fusion: three fixed-size branches blended per
//! pixel by a softmax over Gaussian distances between the pixel's scale and each
//! branch's filter size.

use rand::Rng;

use super::{conv2d, ConvKernel};
use crate::error::{domain_err, shape_err, Result};
use crate::geometry::ScaleMap;
use crate::params::{join, ParamSet};
use crate::tensor::Tensor4;

pub const DMSF_BRANCH_SIZES: [usize; 3] = [1, 3, 5];
pub const DEFAULT_SIGMA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DmsfParams {
    /// Dense `k_i × k_i` banks, strictly increasing odd sizes.
    pub branches: [ConvKernel; 3],
    pub sigma: f64,
}

impl DmsfParams {
    pub fn new(branches: [ConvKernel; 3], sigma: f64) -> Result<Self> {
        let p = Self { branches, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn random(rng: &mut impl Rng, out_channels: usize, in_channels: usize, sigma: f64) -> Result<Self> {
        let branches = DMSF_BRANCH_SIZES.map(|k| ConvKernel::random(rng, out_channels, in_channels, k));
        Self::new(branches, sigma)
    }

    pub fn branch_sizes(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.branches[i].size() as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return domain_err(format!("sigma must be > 0, got {}", self.sigma));
        }
        let sizes = self.branches.each_ref().map(|b| b.size());
        if !(sizes[0] < sizes[1] && sizes[1] < sizes[2]) {
            return shape_err(format!("branch sizes must be strictly increasing, got {sizes:?}"));
        }
        let (o, i) = (self.branches[0].out_channels(), self.branches[0].in_channels());
        if self.branches.iter().any(|b| b.out_channels() != o || b.in_channels() != i) {
            return shape_err("branch kernels must share channel counts");
        }
        Ok(())
    }
}

impl ParamSet for DmsfParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>) {
        for (b, k) in self.branches.iter().enumerate() {
            k.visit(&join(prefix, &format!("branch{b}")), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>) {
        for (b, k) in self.branches.iter_mut().enumerate() {
            k.visit_mut(&join(prefix, &format!("branch{b}")), out);
        }
    }
}

/// Branch weights `softmax_i(exp(-(k_d - k_i)² / 2σ²))`.
pub fn dmsf_weights(k_d: f64, branch_sizes: [f64; 3], sigma: f64) -> Result<[f64; 3]> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return domain_err(format!("sigma must be > 0, got {sigma}"));
    }
    let g = branch_sizes.map(|k| (-(k_d - k).powi(2) / (2.0 * sigma * sigma)).exp());
    let m = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = g.map(|v| (v - m).exp());
    let z: f64 = e.iter().sum();
    Ok(e.map(|v| v / z))
}

pub fn dmsf_forward(input: &Tensor4, params: &DmsfParams, scale: &ScaleMap) -> Result<Tensor4> {
    params.validate()?;
    let s = input.shape();
    let k = scale.values().shape();
    if k.n != s.n || k.h != s.h || k.w != s.w {
        return shape_err(format!("scale map dims {k} do not match input dims {s}"));
    }
    let feats = params
        .branches
        .iter()
        .map(|b| conv2d(input, b))
        .collect::<Result<Vec<_>>>()?;
    let sizes = params.branch_sizes();
    let weights = scale
        .values()
        .data()
        .iter()
        .map(|&kd| dmsf_weights(kd, sizes, params.sigma))
        .collect::<Result<Vec<_>>>()?;
    let out_shape = feats[0].shape();
    let plane = s.plane();
    let mut out = Tensor4::zeros(out_shape);
    for n in 0..out_shape.n {
        for c in 0..out_shape.c {
            let dst = out.plane_mut(n, c);
            for (p, d) in dst.iter_mut().enumerate() {
                let a = &weights[n * plane + p];
                *d = a[0] * feats[0].plane(n, c)[p] + a[1] * feats[1].plane(n, c)[p] + a[2] * feats[2].plane(n, c)[p];
            }
        }
    }
    Ok(out)
}
