//! Depth-guided progressive decoder.
//!
//! Pyramids are indexed by level with `0` the finest; level `l + 1` has half the
//! spatial size of level `l`. The coarsest encoder feature goes through a plain
//! conv and a depth head; every finer level is decoded by [`dcsd_decode_level`],
//! guided by scale maps converted from the previous level's depth (or a prior).
//!
//! Scale maps are detached guidance: [`decoder_backward`] passes no gradient
//! through them into earlier depth predictions.

use rand::Rng;

use crate::conv::{conv2d, conv2d_backward, conv2d_standard, dcsconv_backward, dcsconv_forward, sigmoid, ConvKernel, ScaleGradient};
use crate::error::{domain_err, shape_err, Error, Result};
use crate::fusion::{dcsf_backward, dcsf_forward, DcsfParams};
use crate::geometry::{ScaleConversion, ScaleMap, ScalePolicy, SCALE_DIFF_CENTER};
use crate::params::{join, ParamSet};
use crate::rng::{uniform_tensor, SeedStream};
use crate::tensor::{resize, resize_nearest_backward, ResizeMode, Shape4, Tensor4};

pub const LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self {
            min_depth: 0.1,
            max_depth: 100.0,
        }
    }
}

impl DepthRange {
    pub fn new(min_depth: f64, max_depth: f64) -> Result<Self> {
        if !(min_depth > 0.0 && min_depth < max_depth && max_depth.is_finite()) {
            return domain_err(format!("depth range needs 0 < min < max, got [{min_depth}, {max_depth}]"));
        }
        Ok(Self { min_depth, max_depth })
    }

    fn disparity_span(&self) -> (f64, f64) {
        let lo = 1.0 / self.max_depth;
        (lo, 1.0 / self.min_depth - lo)
    }

    /// Depth for a head activation: `1 / (1/max + (1/min - 1/max) · σ(z))`.
    pub fn depth_from_logit(&self, z: f64) -> f64 {
        let (lo, span) = self.disparity_span();
        1.0 / (lo + span * sigmoid(z))
    }

    fn depth_logit_derivative(&self, z: f64, depth: f64) -> f64 {
        let (_, span) = self.disparity_span();
        let s = sigmoid(z);
        -depth * depth * span * s * (1.0 - s)
    }
}

/// Depth map `n×1×h×w` from `feature` through a `C → 1` head conv.
pub fn feature_to_depth(feature: &Tensor4, head: &ConvKernel, range: &DepthRange) -> Result<Tensor4> {
    Ok(conv2d(feature, head)?.map(|z| range.depth_from_logit(z)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcsdLevelParams {
    pub dec_dcsc: ConvKernel,
    pub dec_conv: ConvKernel,
    pub dec_fuse: DcsfParams,
    pub enc_dcsc: ConvKernel,
    pub enc_fuse: DcsfParams,
    pub merge_dcsc: ConvKernel,
    pub merge_conv: ConvKernel,
    pub merge_fuse: DcsfParams,
    /// `1×1`, merged width → output width.
    pub squeeze: ConvKernel,
    /// `3×3`, output width → 1.
    pub depth_head: ConvKernel,
}

impl DcsdLevelParams {
    pub fn random(rng: &mut impl Rng, prev_channels: usize, enc_channels: usize, out_channels: usize) -> Self {
        let merged = prev_channels + enc_channels;
        Self {
            dec_dcsc: ConvKernel::random(rng, prev_channels, prev_channels, 3),
            dec_conv: ConvKernel::random(rng, prev_channels, prev_channels, 3),
            dec_fuse: DcsfParams::random(rng, prev_channels, prev_channels),
            enc_dcsc: ConvKernel::random(rng, enc_channels, enc_channels, 3),
            enc_fuse: DcsfParams::random(rng, enc_channels, enc_channels),
            merge_dcsc: ConvKernel::random(rng, merged, merged, 3),
            merge_conv: ConvKernel::random(rng, merged, merged, 3),
            merge_fuse: DcsfParams::random(rng, merged, merged),
            squeeze: ConvKernel::random(rng, out_channels, merged, 1),
            depth_head: ConvKernel::random(rng, 1, out_channels, 3),
        }
    }

    pub fn prev_channels(&self) -> usize {
        self.dec_dcsc.in_channels()
    }

    pub fn enc_channels(&self) -> usize {
        self.enc_dcsc.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.squeeze.out_channels()
    }
}

impl ParamSet for DcsdLevelParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>) {
        self.dec_dcsc.visit(&join(prefix, "dec_dcsc"), out);
        self.dec_conv.visit(&join(prefix, "dec_conv"), out);
        self.dec_fuse.visit(&join(prefix, "dec_fuse"), out);
        self.enc_dcsc.visit(&join(prefix, "enc_dcsc"), out);
        self.enc_fuse.visit(&join(prefix, "enc_fuse"), out);
        self.merge_dcsc.visit(&join(prefix, "merge_dcsc"), out);
        self.merge_conv.visit(&join(prefix, "merge_conv"), out);
        self.merge_fuse.visit(&join(prefix, "merge_fuse"), out);
        self.squeeze.visit(&join(prefix, "squeeze"), out);
        self.depth_head.visit(&join(prefix, "depth_head"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>) {
        self.dec_dcsc.visit_mut(&join(prefix, "dec_dcsc"), out);
        self.dec_conv.visit_mut(&join(prefix, "dec_conv"), out);
        self.dec_fuse.visit_mut(&join(prefix, "dec_fuse"), out);
        self.enc_dcsc.visit_mut(&join(prefix, "enc_dcsc"), out);
        self.enc_fuse.visit_mut(&join(prefix, "enc_fuse"), out);
        self.merge_dcsc.visit_mut(&join(prefix, "merge_dcsc"), out);
        self.merge_conv.visit_mut(&join(prefix, "merge_conv"), out);
        self.merge_fuse.visit_mut(&join(prefix, "merge_fuse"), out);
        self.squeeze.visit_mut(&join(prefix, "squeeze"), out);
        self.depth_head.visit_mut(&join(prefix, "depth_head"), out);
    }
}

/// Channel widths per level, finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderShape {
    pub enc: [usize; LEVELS],
    pub dec: [usize; LEVELS],
}

impl DecoderShape {
    pub fn uniform(channels: usize) -> Self {
        Self {
            enc: [channels; LEVELS],
            dec: [channels; LEVELS],
        }
    }

    /// Widths `base · 2^l`: halving from the coarsest level towards the finest.
    pub fn halving(base: usize) -> Self {
        let w = std::array::from_fn(|l| base << l);
        Self { enc: w, dec: w }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// `3×3`, coarsest encoder width → coarsest decoder width.
    pub top_conv: ConvKernel,
    pub top_head: ConvKernel,
    /// Blocks for levels `0..4`, finest first.
    pub levels: Vec<DcsdLevelParams>,
}

impl DecoderParams {
    pub fn random(rng: &mut impl Rng, shape: &DecoderShape) -> Self {
        let top = LEVELS - 1;
        let top_conv = ConvKernel::random(rng, shape.dec[top], shape.enc[top], 3);
        let top_head = ConvKernel::random(rng, 1, shape.dec[top], 3);
        let levels = (0..top)
            .map(|l| DcsdLevelParams::random(rng, shape.dec[l + 1], shape.enc[l], shape.dec[l]))
            .collect();
        Self {
            top_conv,
            top_head,
            levels,
        }
    }

    pub fn shape(&self) -> DecoderShape {
        let top = LEVELS - 1;
        let mut s = DecoderShape::uniform(0);
        s.enc[top] = self.top_conv.in_channels();
        s.dec[top] = self.top_conv.out_channels();
        for (l, p) in self.levels.iter().enumerate() {
            s.enc[l] = p.enc_channels();
            s.dec[l] = p.out_channels();
        }
        s
    }

    fn validate(&self) -> Result<()> {
        if self.levels.len() != LEVELS - 1 {
            return shape_err(format!("decoder needs {} level blocks, got {}", LEVELS - 1, self.levels.len()));
        }
        let shape = self.shape();
        for (l, p) in self.levels.iter().enumerate() {
            if p.prev_channels() != shape.dec[l + 1] {
                return shape_err(format!(
                    "level {l} expects {} decoder channels from level {}, which produces {}",
                    p.prev_channels(),
                    l + 1,
                    shape.dec[l + 1]
                ));
            }
        }
        Ok(())
    }
}

impl ParamSet for DecoderParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>) {
        self.top_conv.visit(&join(prefix, "top_conv"), out);
        self.top_head.visit(&join(prefix, "top_head"), out);
        for (l, p) in self.levels.iter().enumerate() {
            p.visit(&join(prefix, &format!("level{l}")), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>) {
        self.top_conv.visit_mut(&join(prefix, "top_conv"), out);
        self.top_head.visit_mut(&join(prefix, "top_head"), out);
        for (l, p) in self.levels.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &format!("level{l}")), out);
        }
    }
}

/// Seeded feature pyramid with values in `[-1, 1]`, finest level `finest_h × finest_w`.
///
/// Level `l` is drawn from the stream labelled `pyramid/level{l}`.
pub fn random_pyramid(seed: &SeedStream, batch: usize, shape: &DecoderShape, finest_h: usize, finest_w: usize) -> Result<Vec<Tensor4>> {
    let div = 1 << (LEVELS - 1);
    if finest_h % div != 0 || finest_w % div != 0 || finest_h == 0 || finest_w == 0 {
        return shape_err(format!("pyramid base {finest_h}x{finest_w} must be a positive multiple of {div}"));
    }
    Ok((0..LEVELS)
        .map(|l| {
            let mut rng = seed.rng(&format!("pyramid/level{l}"));
            uniform_tensor(&mut rng, Shape4::new(batch, shape.enc[l], finest_h >> l, finest_w >> l), -1.0, 1.0)
        })
        .collect())
}

/// How the depth-scaled convolutions of the decoder are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMode {
    #[default]
    DepthScaled,
    /// Every DcSConv kernel runs as a plain `3×3` conv and fusion sees `S_U ≡ 0`.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecoderOptions {
    pub range: DepthRange,
    pub policy: ScalePolicy,
    pub mode: ConvMode,
}

/// Where the scale maps of each level come from.
#[derive(Debug, Clone, Copy)]
pub enum Guidance<'a> {
    /// Previous-level predictions.
    SelfGuided,
    /// Per-level depth maps `n×1×h_l×w_l`, finest first.
    Prior(&'a [Tensor4]),
}

/// Replaces the level-`l` prediction before it is used as guidance.
pub type DepthInjection<'a> = &'a dyn Fn(usize, &Tensor4) -> Tensor4;

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Shape(m) => Error::Shape(format!("{name}: {m}")),
        other => other,
    })
}

fn scaled_conv(x: &Tensor4, k: &ConvKernel, scale: &ScaleMap, mode: ConvMode) -> Result<Tensor4> {
    match mode {
        ConvMode::DepthScaled => dcsconv_forward(x, k, scale),
        ConvMode::Standard => conv2d_standard(x, k),
    }
}

fn scaled_conv_backward(x: &Tensor4, k: &ConvKernel, scale: &ScaleMap, g: &Tensor4, mode: ConvMode) -> Result<(Tensor4, ConvKernel)> {
    match mode {
        ConvMode::DepthScaled => {
            let d = dcsconv_backward(x, k, scale, g, ScaleGradient::Detached)?;
            Ok((d.input, d.kernel))
        }
        ConvMode::Standard => conv2d_backward(x, k, g),
    }
}

struct LevelTrace {
    f_prev: Tensor4,
    f_enc: Tensor4,
    dec_a: Tensor4,
    dec_b: Tensor4,
    enc_a: Tensor4,
    merged: Tensor4,
    merge_a: Tensor4,
    merge_b: Tensor4,
    fs_dec: Tensor4,
    f_dec: Tensor4,
    logits: Tensor4,
    depth: Tensor4,
}

fn level_forward(
    f_prev: &Tensor4,
    f_enc: &Tensor4,
    low: &ScaleMap,
    high: &ScaleMap,
    p: &DcsdLevelParams,
    range: &DepthRange,
    mode: ConvMode,
) -> Result<LevelTrace> {
    let (a, b) = (f_prev.shape(), f_enc.shape());
    if b.n != a.n || b.h != 2 * a.h || b.w != 2 * a.w {
        return shape_err(format!("level input: encoder feature {b} must be twice the spatial size of decoder feature {a}"));
    }
    for (what, m, dims) in [("scale_low", low, a), ("scale_high", high, b)] {
        let s = m.values().shape();
        if s.n != dims.n || s.h != dims.h || s.w != dims.w {
            return shape_err(format!("level input: {what} dims {s} do not match {dims}"));
        }
    }

    let dec_a = stage("decoder path", scaled_conv(f_prev, &p.dec_dcsc, low, mode))?;
    let dec_b = stage("decoder path", conv2d(f_prev, &p.dec_conv))?;
    let fs_fdec = stage("decoder path", dcsf_forward(&dec_a, &dec_b, low, &p.dec_fuse))?;

    let enc_a = stage("encoder path", scaled_conv(f_enc, &p.enc_dcsc, high, mode))?;
    let fs_enc = stage("encoder path", dcsf_forward(&enc_a, f_enc, high, &p.enc_fuse))?;

    let up = resize(&fs_fdec, b.h, b.w, ResizeMode::Nearest)?;
    let merged = stage("merge", Tensor4::concat_channels(&[&up, &fs_enc]))?;
    let merge_a = stage("merge", scaled_conv(&merged, &p.merge_dcsc, high, mode))?;
    let merge_b = stage("merge", conv2d(&merged, &p.merge_conv))?;
    let fs_dec = stage("merge", dcsf_forward(&merge_a, &merge_b, high, &p.merge_fuse))?;

    let f_dec = stage("squeeze", conv2d(&fs_dec, &p.squeeze))?;
    let logits = stage("depth head", conv2d(&f_dec, &p.depth_head))?;
    let depth = logits.map(|z| range.depth_from_logit(z));
    Ok(LevelTrace {
        f_prev: f_prev.clone(),
        f_enc: f_enc.clone(),
        dec_a,
        dec_b,
        enc_a,
        merged,
        merge_a,
        merge_b,
        fs_dec,
        f_dec,
        logits,
        depth,
    })
}

/// One decoding level: returns the decoded feature and its depth prediction.
pub fn dcsd_decode_level(
    f_dec_prev: &Tensor4,
    f_enc: &Tensor4,
    scale_low: &ScaleMap,
    scale_high: &ScaleMap,
    params: &DcsdLevelParams,
    range: &DepthRange,
) -> Result<(Tensor4, Tensor4)> {
    let t = level_forward(f_dec_prev, f_enc, scale_low, scale_high, params, range, ConvMode::DepthScaled)?;
    Ok((t.f_dec, t.depth))
}

struct LevelGrads {
    f_prev: Tensor4,
    f_enc: Tensor4,
    params: DcsdLevelParams,
}

fn level_backward(
    t: &LevelTrace,
    low: &ScaleMap,
    high: &ScaleMap,
    p: &DcsdLevelParams,
    range: &DepthRange,
    mode: ConvMode,
    grad_f_dec: Option<&Tensor4>,
    grad_depth: Option<&Tensor4>,
) -> Result<LevelGrads> {
    let mut d_fdec = grad_f_dec.cloned().unwrap_or_else(|| Tensor4::zeros(t.f_dec.shape()));
    let g_head = match grad_depth {
        Some(gd) => {
            let d_logits = gd.zip_map(&t.logits, |g, z| g * range.depth_logit_derivative(z, range.depth_from_logit(z)))?;
            let (df, gk) = conv2d_backward(&t.f_dec, &p.depth_head, &d_logits)?;
            d_fdec.axpy(1.0, &df)?;
            gk
        }
        None => p.depth_head.zeroed(),
    };
    let (d_fs_dec, g_squeeze) = conv2d_backward(&t.fs_dec, &p.squeeze, &d_fdec)?;

    let gm = dcsf_backward(&t.merge_a, &t.merge_b, high, &p.merge_fuse, &d_fs_dec)?;
    let (mut d_merged, g_merge_dcsc) = scaled_conv_backward(&t.merged, &p.merge_dcsc, high, &gm.f_dcsc, mode)?;
    let (d_m2, g_merge_conv) = conv2d_backward(&t.merged, &p.merge_conv, &gm.f_c)?;
    d_merged.axpy(1.0, &d_m2)?;
    let (d_up, d_fs_enc) = d_merged.split_channels(p.prev_channels())?;
    let prev = t.f_prev.shape();
    let d_fs_fdec = resize_nearest_backward(&d_up, prev.h, prev.w);

    let ge = dcsf_backward(&t.enc_a, &t.f_enc, high, &p.enc_fuse, &d_fs_enc)?;
    let (mut d_f_enc, g_enc_dcsc) = scaled_conv_backward(&t.f_enc, &p.enc_dcsc, high, &ge.f_dcsc, mode)?;
    d_f_enc.axpy(1.0, &ge.f_c)?;

    let gd = dcsf_backward(&t.dec_a, &t.dec_b, low, &p.dec_fuse, &d_fs_fdec)?;
    let (mut d_f_prev, g_dec_dcsc) = scaled_conv_backward(&t.f_prev, &p.dec_dcsc, low, &gd.f_dcsc, mode)?;
    let (d_p2, g_dec_conv) = conv2d_backward(&t.f_prev, &p.dec_conv, &gd.f_c)?;
    d_f_prev.axpy(1.0, &d_p2)?;

    Ok(LevelGrads {
        f_prev: d_f_prev,
        f_enc: d_f_enc,
        params: DcsdLevelParams {
            dec_dcsc: g_dec_dcsc,
            dec_conv: g_dec_conv,
            dec_fuse: gd.params,
            enc_dcsc: g_enc_dcsc,
            enc_fuse: ge.params,
            merge_dcsc: g_merge_dcsc,
            merge_conv: g_merge_conv,
            merge_fuse: gm.params,
            squeeze: g_squeeze,
            depth_head: g_head,
        },
    })
}

/// Guidance actually used at one decoding level.
#[derive(Debug, Clone)]
pub struct LevelScales {
    pub low: ScaleMap,
    pub high: ScaleMap,
}

/// Intermediates of one decoder pass, finest level first.
pub struct DecoderTrace {
    /// Predicted depth per level, before any injection.
    pub depths: Vec<Tensor4>,
    /// Decoded feature per level.
    pub features: Vec<Tensor4>,
    /// Depth map that guided the next finer level, after injection (levels `1..5`;
    /// entry `0` is the finest prediction).
    pub guides: Vec<Tensor4>,
    /// Scale maps of levels `0..4`.
    pub scales: Vec<LevelScales>,
    levels: Vec<LevelTrace>,
}

fn validate_pyramid(pyramid: &[Tensor4], params: &DecoderParams) -> Result<()> {
    params.validate()?;
    if pyramid.len() != LEVELS {
        return shape_err(format!("pyramid needs {LEVELS} levels, got {}", pyramid.len()));
    }
    let shape = params.shape();
    for (l, f) in pyramid.iter().enumerate() {
        let s = f.shape();
        if s.c != shape.enc[l] {
            return shape_err(format!("pyramid level {l}: expected {} channels, got {s}", shape.enc[l]));
        }
        if l > 0 {
            let finer = pyramid[l - 1].shape();
            if s.n != finer.n || finer.h != 2 * s.h || finer.w != 2 * s.w {
                return shape_err(format!("pyramid level {l} ({s}) must be half the spatial size of level {} ({finer})", l - 1));
            }
        }
    }
    Ok(())
}

fn validate_prior(prior: &[Tensor4], pyramid: &[Tensor4]) -> Result<()> {
    if prior.len() != LEVELS {
        return shape_err(format!("prior needs {LEVELS} levels, got {}", prior.len()));
    }
    for (l, (p, f)) in prior.iter().zip(pyramid).enumerate() {
        let want = f.shape().with_channels(1);
        if p.shape() != want {
            return shape_err(format!("prior level {l}: expected {want}, got {}", p.shape()));
        }
    }
    Ok(())
}

fn neutral_scale(like: &Tensor4) -> Result<ScaleMap> {
    let s = like.shape();
    ScaleMap::constant(s.n, s.h, s.w, SCALE_DIFF_CENTER, ScaleConversion::standard(1.0)?)
}

/// Full decoder pass with intermediates; `inject` may replace any coarser-level
/// prediction before it becomes guidance.
pub fn decoder_trace(
    pyramid: &[Tensor4],
    params: &DecoderParams,
    opts: &DecoderOptions,
    guidance: Guidance<'_>,
    inject: Option<DepthInjection<'_>>,
) -> Result<DecoderTrace> {
    validate_pyramid(pyramid, params)?;
    if let Guidance::Prior(prior) = guidance {
        validate_prior(prior, pyramid)?;
    }
    let top = LEVELS - 1;
    let mut features = vec![Tensor4::scalar(0.0); LEVELS];
    let mut depths = vec![Tensor4::scalar(0.0); LEVELS];
    let mut guides = vec![Tensor4::scalar(0.0); LEVELS];
    let mut scales = Vec::with_capacity(top);
    let mut levels = Vec::with_capacity(top);

    features[top] = stage("top level", conv2d(&pyramid[top], &params.top_conv))?;
    depths[top] = stage("top level", feature_to_depth(&features[top], &params.top_head, &opts.range))?;

    for l in (0..top).rev() {
        guides[l + 1] = match inject {
            Some(f) => f(l + 1, &depths[l + 1]),
            None => depths[l + 1].clone(),
        };
        let fine = pyramid[l].shape();
        let (low, high) = match (opts.mode, guidance) {
            (ConvMode::Standard, _) => (neutral_scale(&features[l + 1])?, neutral_scale(&pyramid[l])?),
            (ConvMode::DepthScaled, Guidance::Prior(prior)) => {
                (opts.policy.scale_map(&prior[l + 1])?, opts.policy.scale_map(&prior[l])?)
            }
            (ConvMode::DepthScaled, Guidance::SelfGuided) => {
                let up = resize(&guides[l + 1], fine.h, fine.w, ResizeMode::Bilinear)?;
                (opts.policy.scale_map(&guides[l + 1])?, opts.policy.scale_map(&up)?)
            }
        };
        let t = level_forward(&features[l + 1], &pyramid[l], &low, &high, &params.levels[l], &opts.range, opts.mode)
            .map_err(|e| match e {
                Error::Shape(m) => Error::Shape(format!("level {l}: {m}")),
                other => other,
            })?;
        features[l] = t.f_dec.clone();
        depths[l] = t.depth.clone();
        scales.push(LevelScales { low, high });
        levels.push(t);
    }
    scales.reverse();
    levels.reverse();
    guides[0] = depths[0].clone();
    Ok(DecoderTrace {
        depths,
        features,
        guides,
        scales,
        levels,
    })
}

/// Predicted depth maps, finest level first; entry `0` is the final output.
pub fn decoder_forward(pyramid: &[Tensor4], params: &DecoderParams, opts: &DecoderOptions, guidance: Guidance<'_>) -> Result<Vec<Tensor4>> {
    Ok(decoder_trace(pyramid, params, opts, guidance, None)?.depths)
}

#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub params: DecoderParams,
    /// Gradients w.r.t. the pyramid, finest first.
    pub features: Vec<Tensor4>,
}

/// Gradients of `Σ grad_finest ⊙ depth_0` w.r.t. every parameter and pyramid level.
pub fn decoder_backward(
    pyramid: &[Tensor4],
    params: &DecoderParams,
    opts: &DecoderOptions,
    guidance: Guidance<'_>,
    grad_finest: &Tensor4,
) -> Result<DecoderGrads> {
    let trace = decoder_trace(pyramid, params, opts, guidance, None)?;
    grad_finest.expect_shape(trace.depths[0].shape(), "decoder_backward grad_finest")?;
    let top = LEVELS - 1;
    let mut feature_grads = vec![Tensor4::scalar(0.0); LEVELS];
    let mut level_grads = Vec::with_capacity(top);
    let mut carry: Option<Tensor4> = None;
    for l in 0..top {
        let g = level_backward(
            &trace.levels[l],
            &trace.scales[l].low,
            &trace.scales[l].high,
            &params.levels[l],
            &opts.range,
            opts.mode,
            carry.as_ref(),
            (l == 0).then_some(grad_finest),
        )?;
        feature_grads[l] = g.f_enc;
        carry = Some(g.f_prev);
        level_grads.push(g.params);
    }
    let d_top = carry.expect("at least one level");
    let (d_enc_top, g_top_conv) = conv2d_backward(&pyramid[top], &params.top_conv, &d_top)?;
    feature_grads[top] = d_enc_top;
    Ok(DecoderGrads {
        params: DecoderParams {
            top_conv: g_top_conv,
            top_head: params.top_head.zeroed(),
            levels: level_grads,
        },
        features: feature_grads,
    })
}
