//! Scale-aware fusion of DcSConv features with standard-convolution features.
//!
//! Given `f_dcsc` and `f_c` (both `n×C×h×w`) and a scale map:
//!
//! ```text
//! U   = [f_dcsc, f_c]                              (2C channels)
//! S_U = (k - 3) / 3
//! M_c = σ(excite(relu(squeeze(avgpool(inject_c([U, S_U]))))))
//! U_v = M_c ⊙ U
//! F'  = inject_s([U_v, S_U])
//! M_s = σ(conv7x7([mean_c F', max_c F']))
//! out = out_proj(M_c ⊙ [M_s ⊙ f_dcsc, f_c] + U)
//! ```
//!
//! The scale map is treated as fixed guidance: no gradient flows into it.

use rand::Rng;

use crate::conv::{conv2d, conv2d_backward, sigmoid, ConvKernel};
use crate::error::{shape_err, Result};
use crate::geometry::{normalize_scale_map, ScaleMap};
use crate::params::{join, ParamSet};
use crate::tensor::{channel_argmax, channel_pool, global_avg_pool, ChannelPool, Shape4, Tensor4};

pub const SE_REDUCTION: usize = 16;
pub const SE_MIN_HIDDEN: usize = 4;
pub const SPATIAL_KERNEL: usize = 7;

/// Bottleneck width of the squeeze-excitation block for `channels` inputs.
pub fn se_hidden_channels(channels: usize) -> usize {
    (channels / SE_REDUCTION).max(SE_MIN_HIDDEN)
}

/// Squeeze-excitation projections, both `1×1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeParams {
    pub squeeze: ConvKernel,
    pub excite: ConvKernel,
}

impl ParamSet for SeParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>) {
        self.squeeze.visit(&join(prefix, "squeeze"), out);
        self.excite.visit(&join(prefix, "excite"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>) {
        self.squeeze.visit_mut(&join(prefix, "squeeze"), out);
        self.excite.visit_mut(&join(prefix, "excite"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcsfParams {
    /// `1×1`, `2C+1 → 2C`.
    pub inject_c: ConvKernel,
    pub se: SeParams,
    /// `1×1`, `2C+1 → 2C`.
    pub inject_s: ConvKernel,
    /// `7×7`, `2 → 1`.
    pub spatial: ConvKernel,
    /// `1×1`, `2C → C_out`.
    pub out_proj: ConvKernel,
}

impl DcsfParams {
    pub fn zeros(channels: usize, out_channels: usize) -> Self {
        let two_c = 2 * channels;
        let hidden = se_hidden_channels(two_c);
        Self {
            inject_c: ConvKernel::zeros(two_c, two_c + 1, 1),
            se: SeParams {
                squeeze: ConvKernel::zeros(hidden, two_c, 1),
                excite: ConvKernel::zeros(two_c, hidden, 1),
            },
            inject_s: ConvKernel::zeros(two_c, two_c + 1, 1),
            spatial: ConvKernel::zeros(1, 2, SPATIAL_KERNEL),
            out_proj: ConvKernel::zeros(out_channels, two_c, 1),
        }
    }

    pub fn random(rng: &mut impl Rng, channels: usize, out_channels: usize) -> Self {
        let two_c = 2 * channels;
        let hidden = se_hidden_channels(two_c);
        Self {
            inject_c: ConvKernel::random(rng, two_c, two_c + 1, 1),
            se: SeParams {
                squeeze: ConvKernel::random(rng, hidden, two_c, 1),
                excite: ConvKernel::random(rng, two_c, hidden, 1),
            },
            inject_s: ConvKernel::random(rng, two_c, two_c + 1, 1),
            spatial: ConvKernel::random(rng, 1, 2, SPATIAL_KERNEL),
            out_proj: ConvKernel::random(rng, out_channels, two_c, 1),
        }
    }

    /// Channel count `C` of each of the two fused inputs.
    pub fn branch_channels(&self) -> usize {
        self.out_proj.in_channels() / 2
    }

    pub fn out_channels(&self) -> usize {
        self.out_proj.out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let two_c = self.out_proj.in_channels();
        let hidden = self.se.squeeze.out_channels();
        let checks = [
            ("inject_c", &self.inject_c, two_c, two_c + 1, 1),
            ("se.squeeze", &self.se.squeeze, hidden, two_c, 1),
            ("se.excite", &self.se.excite, two_c, hidden, 1),
            ("inject_s", &self.inject_s, two_c, two_c + 1, 1),
            ("spatial", &self.spatial, 1, 2, SPATIAL_KERNEL),
        ];
        if two_c % 2 != 0 {
            return shape_err(format!("out_proj input width {two_c} must be even"));
        }
        for (name, k, o, i, size) in checks {
            if k.out_channels() != o || k.in_channels() != i || k.size() != size {
                return shape_err(format!(
                    "{name}: expected {o}x{i}x{size}x{size}, got {}",
                    k.weight.shape()
                ));
            }
        }
        if self.out_proj.size() != 1 {
            return shape_err("out_proj must be 1x1");
        }
        Ok(())
    }
}

impl ParamSet for DcsfParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>) {
        self.inject_c.visit(&join(prefix, "inject_c"), out);
        self.se.visit(&join(prefix, "se"), out);
        self.inject_s.visit(&join(prefix, "inject_s"), out);
        self.spatial.visit(&join(prefix, "spatial"), out);
        self.out_proj.visit(&join(prefix, "out_proj"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>) {
        self.inject_c.visit_mut(&join(prefix, "inject_c"), out);
        self.se.visit_mut(&join(prefix, "se"), out);
        self.inject_s.visit_mut(&join(prefix, "inject_s"), out);
        self.spatial.visit_mut(&join(prefix, "spatial"), out);
        self.out_proj.visit_mut(&join(prefix, "out_proj"), out);
    }
}

fn relu(t: &Tensor4) -> Tensor4 {
    t.map(|v| v.max(0.0))
}

/// `t[n,c,:,:] *= m[n,c]` for an `n×C×1×1` weight tensor.
fn scale_channels(t: &Tensor4, m: &Tensor4) -> Tensor4 {
    let s = t.shape();
    let mut out = t.clone();
    for n in 0..s.n {
        for c in 0..s.c {
            let k = m.at(n, c, 0, 0);
            out.plane_mut(n, c).iter_mut().for_each(|v| *v *= k);
        }
    }
    out
}

/// `t[n,c,y,x] *= m[n,0,y,x]`.
fn scale_spatial(t: &Tensor4, m: &Tensor4) -> Tensor4 {
    let s = t.shape();
    let mut out = t.clone();
    for n in 0..s.n {
        let mp = m.plane(n, 0);
        for c in 0..s.c {
            out.plane_mut(n, c).iter_mut().zip(mp).for_each(|(v, k)| *v *= k);
        }
    }
    out
}

/// `Σ_{y,x} a[n,c,y,x] · b[n,c,y,x]` as `n×C×1×1`.
fn channel_dot(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    let s = a.shape();
    Tensor4::from_fn(Shape4::new(s.n, s.c, 1, 1), |n, c, _, _| {
        a.plane(n, c).iter().zip(b.plane(n, c)).map(|(p, q)| p * q).sum()
    })
}

fn se_forward(feature: &Tensor4, se: &SeParams) -> Result<(Tensor4, Tensor4, Tensor4, Tensor4)> {
    let pooled = global_avg_pool(feature);
    let hidden_pre = conv2d(&pooled, &se.squeeze)?;
    let hidden = relu(&hidden_pre);
    let weights = conv2d(&hidden, &se.excite)?.map(sigmoid);
    Ok((pooled, hidden_pre, hidden, weights))
}

/// Channel weights `σ(excite(relu(squeeze(avgpool(x)))))`, shape `n×C×1×1`.
pub fn se_channel_attention(feature: &Tensor4, se: &SeParams) -> Result<Tensor4> {
    se.squeeze.expect_input(feature, "se_channel_attention")?;
    Ok(se_forward(feature, se)?.3)
}

fn spatial_attention_parts(u_v: &Tensor4, s_u: &Tensor4, params: &DcsfParams) -> Result<(Tensor4, Tensor4, Tensor4)> {
    let (a, b) = (u_v.shape(), s_u.shape());
    if b.c != 1 || a.n != b.n || a.h != b.h || a.w != b.w {
        return shape_err(format!("spatial attention: U_v dims {a} and S_U dims {b} disagree"));
    }
    let cat = Tensor4::concat_channels(&[u_v, s_u])?;
    let f_prime = conv2d(&cat, &params.inject_s)?;
    let pooled = Tensor4::concat_channels(&[
        &channel_pool(&f_prime, ChannelPool::Avg),
        &channel_pool(&f_prime, ChannelPool::Max),
    ])?;
    let m_s = conv2d(&pooled, &params.spatial)?.map(sigmoid);
    Ok((f_prime, pooled, m_s))
}

/// Spatial weights `M_s`, shape `n×1×h×w`.
pub fn dcsf_spatial_attention(u_v: &Tensor4, s_u: &Tensor4, params: &DcsfParams) -> Result<Tensor4> {
    params.validate()?;
    Ok(spatial_attention_parts(u_v, s_u, params)?.2)
}

struct Trace {
    u: Tensor4,
    cat_c: Tensor4,
    pooled: Tensor4,
    hidden_pre: Tensor4,
    hidden: Tensor4,
    m_c: Tensor4,
    cat_s: Tensor4,
    f_prime: Tensor4,
    pooled_s: Tensor4,
    m_s: Tensor4,
    v: Tensor4,
    z: Tensor4,
    out: Tensor4,
}

fn validate_inputs(f_dcsc: &Tensor4, f_c: &Tensor4, scale: &ScaleMap, params: &DcsfParams) -> Result<()> {
    params.validate()?;
    let s = f_dcsc.shape();
    if f_c.shape() != s {
        return shape_err(format!("DcS-F inputs disagree: {s} vs {}", f_c.shape()));
    }
    if s.c != params.branch_channels() {
        return shape_err(format!(
            "DcS-F expects {} channels per input, got {s}",
            params.branch_channels()
        ));
    }
    let k = scale.values().shape();
    if k.n != s.n || k.h != s.h || k.w != s.w {
        return shape_err(format!("DcS-F scale map dims {k} do not match features {s}"));
    }
    Ok(())
}

fn trace(f_dcsc: &Tensor4, f_c: &Tensor4, scale: &ScaleMap, params: &DcsfParams) -> Result<Trace> {
    validate_inputs(f_dcsc, f_c, scale, params)?;
    let s_u = normalize_scale_map(scale);
    let u = Tensor4::concat_channels(&[f_dcsc, f_c])?;
    let cat_c = Tensor4::concat_channels(&[&u, &s_u])?;
    let injected = conv2d(&cat_c, &params.inject_c)?;
    let (pooled, hidden_pre, hidden, m_c) = se_forward(&injected, &params.se)?;
    let u_v = scale_channels(&u, &m_c);
    let cat_s = Tensor4::concat_channels(&[&u_v, &s_u])?;
    let (f_prime, pooled_s, m_s) = spatial_attention_parts(&u_v, &s_u, params)?;
    let v = Tensor4::concat_channels(&[&scale_spatial(f_dcsc, &m_s), f_c])?;
    let mut z = scale_channels(&v, &m_c);
    z.axpy(1.0, &u)?;
    let out = conv2d(&z, &params.out_proj)?;
    Ok(Trace {
        u,
        cat_c,
        pooled,
        hidden_pre,
        hidden,
        m_c,
        cat_s,
        f_prime,
        pooled_s,
        m_s,
        v,
        z,
        out,
    })
}

/// Fused features, `n×C_out×h×w`.
pub fn dcsf_forward(f_dcsc: &Tensor4, f_c: &Tensor4, scale: &ScaleMap, params: &DcsfParams) -> Result<Tensor4> {
    Ok(trace(f_dcsc, f_c, scale, params)?.out)
}

/// Channel and spatial attention maps of one forward pass, for inspection.
pub fn dcsf_attention(f_dcsc: &Tensor4, f_c: &Tensor4, scale: &ScaleMap, params: &DcsfParams) -> Result<(Tensor4, Tensor4)> {
    let t = trace(f_dcsc, f_c, scale, params)?;
    Ok((t.m_c, t.m_s))
}

#[derive(Debug, Clone)]
pub struct DcsfGrads {
    pub f_dcsc: Tensor4,
    pub f_c: Tensor4,
    pub params: DcsfParams,
}

pub fn dcsf_backward(
    f_dcsc: &Tensor4,
    f_c: &Tensor4,
    scale: &ScaleMap,
    params: &DcsfParams,
    grad_output: &Tensor4,
) -> Result<DcsfGrads> {
    let t = trace(f_dcsc, f_c, scale, params)?;
    grad_output.expect_shape(t.out.shape(), "dcsf_backward grad_output")?;
    let c = params.branch_channels();
    let two_c = 2 * c;
    let s = f_dcsc.shape();

    let (dz, g_out_proj) = conv2d_backward(&t.z, &params.out_proj, grad_output)?;
    // residual
    let mut du = dz.clone();
    let mut dm_c = channel_dot(&dz, &t.v);
    let dv = scale_channels(&dz, &t.m_c);
    let (dv_dcsc, dv_c) = dv.split_channels(c)?;
    let mut d_fdcsc = scale_spatial(&dv_dcsc, &t.m_s);
    let mut d_fc = dv_c;

    let mut dq = Tensor4::zeros(t.m_s.shape());
    for n in 0..s.n {
        for p in 0..s.plane() {
            let mut acc = 0.0;
            for ch in 0..c {
                acc += dv_dcsc.plane(n, ch)[p] * f_dcsc.plane(n, ch)[p];
            }
            let m = t.m_s.plane(n, 0)[p];
            dq.plane_mut(n, 0)[p] = acc * m * (1.0 - m);
        }
    }
    let (d_pooled_s, g_spatial) = conv2d_backward(&t.pooled_s, &params.spatial, &dq)?;
    let argmax = channel_argmax(&t.f_prime);
    let mut d_fprime = Tensor4::zeros(t.f_prime.shape());
    for n in 0..s.n {
        for p in 0..s.plane() {
            let g_avg = d_pooled_s.plane(n, 0)[p] / two_c as f64;
            let g_max = d_pooled_s.plane(n, 1)[p];
            for ch in 0..two_c {
                d_fprime.plane_mut(n, ch)[p] += g_avg;
            }
            d_fprime.plane_mut(n, argmax[n * s.plane() + p])[p] += g_max;
        }
    }
    let (d_cat_s, g_inject_s) = conv2d_backward(&t.cat_s, &params.inject_s, &d_fprime)?;
    let d_uv = d_cat_s.channel_slice(0, two_c)?;
    dm_c.axpy(1.0, &channel_dot(&d_uv, &t.u))?;
    du.axpy(1.0, &scale_channels(&d_uv, &t.m_c))?;

    let d_gate = dm_c.zip_map(&t.m_c, |g, m| g * m * (1.0 - m))?;
    let (d_hidden, g_excite) = conv2d_backward(&t.hidden, &params.se.excite, &d_gate)?;
    let d_hidden_pre = d_hidden.zip_map(&t.hidden_pre, |g, h| if h > 0.0 { g } else { 0.0 })?;
    let (d_pooled, g_squeeze) = conv2d_backward(&t.pooled, &params.se.squeeze, &d_hidden_pre)?;
    let inv_area = 1.0 / s.plane() as f64;
    let d_injected = Tensor4::from_fn(s.with_channels(two_c), |n, ch, _, _| d_pooled.at(n, ch, 0, 0) * inv_area);
    let (d_cat_c, g_inject_c) = conv2d_backward(&t.cat_c, &params.inject_c, &d_injected)?;
    du.axpy(1.0, &d_cat_c.channel_slice(0, two_c)?)?;

    let (du_dcsc, du_c) = du.split_channels(c)?;
    d_fdcsc.axpy(1.0, &du_dcsc)?;
    d_fc.axpy(1.0, &du_c)?;

    Ok(DcsfGrads {
        f_dcsc: d_fdcsc,
        f_c: d_fc,
        params: DcsfParams {
            inject_c: g_inject_c,
            se: SeParams {
                squeeze: g_squeeze,
                excite: g_excite,
            },
            inject_s: g_inject_s,
            spatial: g_spatial,
            out_proj: g_out_proj,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::conv2d_naive_oracle;
    use crate::geometry::ScaleConversion;
    use crate::rng::{uniform_tensor, SeedStream};

    fn conversion() -> ScaleConversion {
        ScaleConversion::standard(1.0).unwrap()
    }

    #[test]
    fn hidden_width() {
        assert_eq!(se_hidden_channels(8), 4);
        assert_eq!(se_hidden_channels(64), 4);
        assert_eq!(se_hidden_channels(128), 8);
    }

    #[test]
    fn zero_se_gives_half() {
        let p = DcsfParams::zeros(3, 3);
        let mut rng = SeedStream::new(40).rng("se");
        let x = uniform_tensor(&mut rng, Shape4::new(2, 6, 4, 4), -5.0, 5.0);
        let m = se_channel_attention(&x, &p.se).unwrap();
        assert_eq!(m.shape(), Shape4::new(2, 6, 1, 1));
        assert!(m.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn attention_ranges() {
        let mut rng = SeedStream::new(41).rng("range");
        let p = DcsfParams::random(&mut rng, 2, 2);
        let x = uniform_tensor(&mut rng, Shape4::new(1, 4, 5, 5), -3.0, 3.0);
        let m = se_channel_attention(&x, &p.se).unwrap();
        assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let su = uniform_tensor(&mut rng, Shape4::new(1, 1, 5, 5), -1.0, 1.0);
        let ms = dcsf_spatial_attention(&x, &su, &p).unwrap();
        assert_eq!(ms.shape(), Shape4::new(1, 1, 5, 5));
        assert!(ms.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let zero = DcsfParams::zeros(2, 2);
        assert!(dcsf_spatial_attention(&x, &su, &zero).unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn constant_inputs_give_constant_interior_attention() {
        let mut rng = SeedStream::new(42).rng("const");
        let p = DcsfParams::random(&mut rng, 2, 2);
        let u_v = Tensor4::full(Shape4::new(1, 4, 9, 9), 0.7);
        let su = Tensor4::full(Shape4::new(1, 1, 9, 9), -0.25);
        let ms = dcsf_spatial_attention(&u_v, &su, &p).unwrap();

        // F' is constant per channel: F'_c = b_c + Σ_j w_cj · in_j
        let inputs = [0.7, 0.7, 0.7, 0.7, -0.25];
        let fp: Vec<f64> = (0..4)
            .map(|c| p.inject_s.bias_at(c) + (0..5).map(|j| p.inject_s.weight.at(c, j, 0, 0) * inputs[j]).sum::<f64>())
            .collect();
        let avg = fp.iter().sum::<f64>() / 4.0;
        let max = fp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tap_sum = |ch: usize, from: usize| -> f64 {
            let mut s = 0.0;
            for ky in from..7 {
                for kx in from..7 {
                    s += p.spatial.weight.at(0, ch, ky, kx);
                }
            }
            s
        };
        let b = p.spatial.bias_at(0);
        let interior = sigmoid(b + avg * tap_sum(0, 0) + max * tap_sum(1, 0));
        // at (0, 0) only taps with ky, kx >= 3 land inside the grid
        let corner = sigmoid(b + avg * tap_sum(0, 3) + max * tap_sum(1, 3));
        for y in 3..6 {
            for x in 3..6 {
                assert!((ms.at(0, 0, y, x) - interior).abs() < 1e-12);
            }
        }
        assert!((ms.at(0, 0, 0, 0) - corner).abs() < 1e-12);

        // same two pixels through the naive oracle on the pooled descriptors
        let pooled = Tensor4::concat_channels(&[
            &Tensor4::full(Shape4::new(1, 1, 9, 9), avg),
            &Tensor4::full(Shape4::new(1, 1, 9, 9), max),
        ])
        .unwrap();
        let q = conv2d_naive_oracle(&pooled, &p.spatial, 1).unwrap();
        assert!((sigmoid(q.at(0, 0, 4, 4)) - interior).abs() < 1e-12);
        assert!((sigmoid(q.at(0, 0, 0, 0)) - corner).abs() < 1e-12);
    }

    #[test]
    fn zero_features_give_bias_field() {
        let mut rng = SeedStream::new(43).rng("zero");
        let mut p = DcsfParams::random(&mut rng, 3, 5);
        p.inject_c.bias.fill(0.0);
        p.inject_s.bias.fill(0.0);
        let z = Tensor4::zeros(Shape4::new(1, 3, 4, 4));
        let sm = ScaleMap::constant(1, 4, 4, 3.0, conversion()).unwrap();
        let out = dcsf_forward(&z, &z, &sm, &p).unwrap();
        assert_eq!(out.shape(), Shape4::new(1, 5, 4, 4));
        for c in 0..5 {
            assert!(out.plane(0, c).iter().all(|&v| v == p.out_proj.bias_at(c)));
        }
    }

    #[test]
    fn saturated_gates_double_the_residual() {
        let mut rng = SeedStream::new(44).rng("sat");
        let mut p = DcsfParams::random(&mut rng, 2, 3);
        p.se.squeeze.weight.fill(0.0);
        p.se.squeeze.bias.fill(0.0);
        p.se.excite.weight.fill(0.0);
        p.se.excite.bias.fill(20.0);
        p.spatial.weight.fill(0.0);
        p.spatial.bias.fill(20.0);
        let fd = uniform_tensor(&mut rng, Shape4::new(1, 2, 5, 5), -1.0, 1.0);
        let fc = uniform_tensor(&mut rng, Shape4::new(1, 2, 5, 5), -1.0, 1.0);
        let sm = ScaleMap::constant(1, 5, 5, 4.0, conversion()).unwrap();
        let out = dcsf_forward(&fd, &fc, &sm, &p).unwrap();

        let u = Tensor4::concat_channels(&[&fd, &fc]).unwrap();
        let expect = conv2d(&u.map(|v| 2.0 * v), &p.out_proj).unwrap();
        // Z = g²·f_dcsc + g·f_c + U with g = σ(20), so |Z - 2U| <= (1 - g²)·max|U|
        // per channel; out_proj adds at most its absolute row sum.
        let g = sigmoid(20.0);
        let row_sum = (0..3)
            .map(|o| (0..4).map(|i| p.out_proj.weight.at(o, i, 0, 0).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let bound = (1.0 - g * g) * u.max_abs() * row_sum;
        assert!(bound < 1e-6);
        assert!(out.max_abs_diff(&expect).unwrap() <= bound);
    }

    #[test]
    fn output_width_and_validation() {
        let mut rng = SeedStream::new(45).rng("w");
        let p = DcsfParams::random(&mut rng, 2, 7);
        let f = uniform_tensor(&mut rng, Shape4::new(2, 2, 3, 4), -1.0, 1.0);
        let sm = ScaleMap::constant(2, 3, 4, 2.0, conversion()).unwrap();
        assert_eq!(dcsf_forward(&f, &f, &sm, &p).unwrap().shape(), Shape4::new(2, 7, 3, 4));
        let wrong = uniform_tensor(&mut rng, Shape4::new(2, 3, 3, 4), -1.0, 1.0);
        assert!(dcsf_forward(&wrong, &wrong, &sm, &p).is_err());
        let bad_scale = ScaleMap::constant(2, 4, 4, 2.0, conversion()).unwrap();
        assert!(dcsf_forward(&f, &f, &bad_scale, &p).is_err());
    }

    #[test]
    fn channel_attention_ignores_spatial_permutation() {
        let mut rng = SeedStream::new(46).rng("perm");
        let p = DcsfParams::random(&mut rng, 2, 2);
        let x = uniform_tensor(&mut rng, Shape4::new(1, 4, 3, 3), -1.0, 1.0);
        // reverse the pixel order of every channel
        let rev = Tensor4::from_fn(x.shape(), |n, c, y, xx| x.at(n, c, 2 - y, 2 - xx));
        let a = se_channel_attention(&x, &p.se).unwrap();
        let b = se_channel_attention(&rev, &p.se).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
    }
}
