//! Verification suites behind `dcs check`.
//!
//! Every check is a plain function over a [`CheckContext`] registered in
//! [`registry`] with the library operations it exercises. Output carries no
//! timings or paths so that reports are byte-identical across thread counts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::ValueEnum;
use dcs_core::conv::{
    conv2d, conv2d_naive_oracle, conv2d_standard, dcsconv_backward, dcsconv_forward, dmsf_forward, dmsf_weights,
    glsconv_backward, glsconv_forward, ConvKernel, DepthToScale, DmsfParams, ScaleGradient, ScaleHeadParams,
    DMSF_BRANCH_SIZES,
};
use dcs_core::decoder::{
    decoder_backward, decoder_forward, decoder_trace, dcsd_decode_level, feature_to_depth, random_pyramid, ConvMode,
    DcsdLevelParams, DecoderOptions, DecoderParams, DecoderShape, DepthRange, Guidance, LEVELS,
};
use dcs_core::fusion::{dcsf_attention, dcsf_backward, dcsf_forward, dcsf_spatial_attention, se_channel_attention, DcsfParams};
use dcs_core::geometry::{
    depth_map_to_scale_map, depth_to_scale, normalize_scale_map, project_length, reference_depth_from_map,
    rescale_length, CameraIntrinsics, ScaleConversion, ScaleMap,
};
use dcs_core::gradcheck::{
    check_param_grads, check_tensor_grad, compare_grads, finite_diff_grad, keep_off_odd_integers, rel_error, write_reports_csv,
    FdOptions, GradReport,
};
use dcs_core::oracle::{dcsf_oracle, dmsf_pixel_oracle, se_oracle};
use dcs_core::rng::{uniform_tensor, SeedStream, StreamRng};
use dcs_core::tensor::{resize, ResizeMode};
use dcs_core::{ParamSet, Result, Shape4, Tensor4};
use rand::Rng;

use crate::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Suite {
    Geometry,
    Conv,
    Dmsf,
    Fusion,
    Decoder,
    Gradcheck,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Conv => "conv",
            Suite::Dmsf => "dmsf",
            Suite::Fusion => "fusion",
            Suite::Decoder => "decoder",
            Suite::Gradcheck => "gradcheck",
            Suite::All => "all",
        }
    }
}

/// Seed and tolerances shared by every check.
#[derive(Debug, Clone, Copy)]
pub struct CheckContext {
    pub seed: u64,
    /// Gradient checks of single operators.
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Gradient check of the full decoder.
    pub decoder_rel_tol: f64,
    /// Fast operator vs scalar oracle, max abs difference.
    pub oracle_tol: f64,
    /// Algebraic reductions, norm-relative deviation.
    pub reduction_tol: f64,
    /// Elements per tensor in the decoder gradient check.
    pub decoder_fd_elements: usize,
    pub sigma: f64,
    /// Negative control: flips one kernel-gradient sign in `dcsconv_grads`.
    pub sabotage_grad: bool,
}

impl Default for CheckContext {
    fn default() -> Self {
        Self {
            seed: 42,
            rel_tol: 1e-4,
            abs_tol: 1e-8,
            decoder_rel_tol: 1e-3,
            oracle_tol: 1e-10,
            reduction_tol: 1e-12,
            decoder_fd_elements: 8,
            sigma: dcs_core::conv::DEFAULT_SIGMA,
            sabotage_grad: false,
        }
    }
}

impl CheckContext {
    fn streams(&self, check: &str) -> SeedStream {
        SeedStream::new(self.seed).child(check)
    }

    fn fd(&self, rel_tol: f64, max_elements: Option<usize>) -> FdOptions {
        FdOptions {
            rel_tol,
            abs_tol: self.abs_tol,
            max_elements,
            seed: self.seed,
            ..FdOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub pass: bool,
    pub metric: f64,
    pub tolerance: f64,
    pub detail: String,
    pub grads: Vec<GradReport>,
}

impl CheckOutcome {
    fn within(metric: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            pass: metric <= tolerance,
            metric,
            tolerance,
            detail: detail.into(),
            grads: Vec::new(),
        }
    }

    fn gradients(grads: Vec<GradReport>, tolerance: f64) -> Self {
        // relative error only matters where the absolute bound is missed
        let metric = grads
            .iter()
            .flat_map(|r| r.analytic.iter().zip(&r.numeric).map(move |(&a, &n)| (a, n, r.abs_tol)))
            .filter(|&(a, n, abs_tol)| (a - n).abs() > abs_tol)
            .map(|(a, n, _)| rel_error(a, n))
            .fold(0.0, f64::max);
        let failing: Vec<&str> = grads.iter().filter(|r| !r.pass).map(|r| r.parameter_name.as_str()).collect();
        let elements: usize = grads.iter().map(GradReport::len).sum();
        let detail = if failing.is_empty() {
            let max_abs = grads.iter().map(|r| r.max_abs_error).fold(0.0, f64::max);
            format!("{} tensors, {elements} elements, max abs error {max_abs:.1e}", grads.len())
        } else {
            format!("failing: {}", failing.join(" "))
        };
        Self {
            pass: failing.is_empty(),
            metric,
            tolerance,
            detail,
            grads,
        }
    }

    /// Adds a condition that must hold on top of the metric bound.
    fn require(mut self, ok: bool, what: &str) -> Self {
        if !ok {
            self.pass = false;
            self.detail = format!("{}; violated: {what}", self.detail);
        }
        self
    }
}

pub struct CheckSpec {
    pub name: &'static str,
    pub suite: Suite,
    /// Library operations this check exercises.
    pub covers: &'static [&'static str],
    pub run: fn(&CheckContext) -> Result<CheckOutcome>,
}

/// Operations that `--suite all` must exercise at least once.
pub const REQUIRED_OPS: &[&str] = &[
    "project_length",
    "rescale_length",
    "depth_to_scale",
    "depth_map_to_scale_map",
    "reference_depth_from_map",
    "normalize_scale_map",
    "conv2d_standard",
    "conv2d_naive_oracle",
    "dcsconv_forward",
    "dcsconv_backward",
    "dmsf_weights",
    "dmsf_forward",
    "glsconv_forward",
    "se_channel_attention",
    "dcsf_spatial_attention",
    "dcsf_forward",
    "feature_to_depth",
    "dcsd_decode_level",
    "decoder_forward",
];

pub fn registry() -> &'static [CheckSpec] {
    use Suite::*;
    const CHECKS: &[CheckSpec] = &[
        CheckSpec { name: "projection_composition", suite: Geometry, covers: &["project_length", "rescale_length"], run: projection_composition },
        CheckSpec { name: "scale_monotone", suite: Geometry, covers: &["depth_to_scale"], run: scale_monotone },
        CheckSpec { name: "scale_conservation", suite: Geometry, covers: &["depth_to_scale"], run: scale_conservation },
        CheckSpec {
            name: "scale_map_reference",
            suite: Geometry,
            covers: &["depth_map_to_scale_map", "reference_depth_from_map", "normalize_scale_map", "depth_to_scale"],
            run: scale_map_reference,
        },
        CheckSpec { name: "standard_vs_naive", suite: Conv, covers: &["conv2d_standard", "conv2d_naive_oracle"], run: standard_vs_naive },
        CheckSpec { name: "reduction_scale3", suite: Conv, covers: &["dcsconv_forward", "conv2d_standard"], run: reduction_scale3 },
        CheckSpec { name: "dilation_scale5", suite: Conv, covers: &["dcsconv_forward", "conv2d_naive_oracle"], run: dilation_scale5 },
        CheckSpec { name: "collapse_scale1", suite: Conv, covers: &["dcsconv_forward"], run: collapse_scale1 },
        CheckSpec { name: "glsconv_constant_head", suite: Conv, covers: &["glsconv_forward", "dcsconv_forward"], run: glsconv_constant_head },
        CheckSpec { name: "weights_fixture", suite: Dmsf, covers: &["dmsf_weights"], run: weights_fixture },
        CheckSpec { name: "weights_simplex", suite: Dmsf, covers: &["dmsf_weights"], run: weights_simplex },
        CheckSpec { name: "dmsf_pixel_oracle", suite: Dmsf, covers: &["dmsf_forward"], run: dmsf_oracle_check },
        CheckSpec { name: "se_oracle", suite: Fusion, covers: &["se_channel_attention"], run: se_oracle_check },
        CheckSpec { name: "spatial_attention", suite: Fusion, covers: &["dcsf_spatial_attention"], run: spatial_attention },
        CheckSpec { name: "dcsf_oracle", suite: Fusion, covers: &["dcsf_forward"], run: dcsf_oracle_check },
        CheckSpec { name: "depth_head_range", suite: Decoder, covers: &["feature_to_depth"], run: depth_head_range },
        CheckSpec { name: "level_composition", suite: Decoder, covers: &["dcsd_decode_level"], run: level_composition },
        CheckSpec { name: "constant_prior_reduction", suite: Decoder, covers: &["decoder_forward"], run: constant_prior_reduction },
        CheckSpec { name: "self_guidance", suite: Decoder, covers: &["decoder_forward", "depth_map_to_scale_map"], run: self_guidance },
        CheckSpec { name: "fd_exactness", suite: Gradcheck, covers: &["finite_diff_grad", "compare_grads"], run: fd_exactness },
        CheckSpec { name: "dcsconv_grads", suite: Gradcheck, covers: &["dcsconv_backward"], run: dcsconv_grads },
        CheckSpec { name: "glsconv_grads", suite: Gradcheck, covers: &["glsconv_forward"], run: glsconv_grads },
        CheckSpec { name: "dcsf_grads", suite: Gradcheck, covers: &["dcsf_forward"], run: dcsf_grads },
        CheckSpec { name: "decoder_grads", suite: Gradcheck, covers: &["decoder_forward"], run: decoder_grads },
    ];
    CHECKS
}

/// Required operations no registered check covers.
pub fn uncovered_ops() -> Vec<&'static str> {
    REQUIRED_OPS
        .iter()
        .copied()
        .filter(|op| !registry().iter().any(|c| c.covers.contains(op)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub suite: &'static str,
    pub name: &'static str,
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

pub fn run_suite(suite: Suite, ctx: &CheckContext) -> CheckReport {
    let mut rows: Vec<CheckRow> = registry()
        .iter()
        .filter(|c| suite == Suite::All || c.suite == suite)
        .map(|c| CheckRow {
            suite: c.suite.name(),
            name: c.name,
            outcome: (c.run)(ctx).unwrap_or_else(|e| CheckOutcome {
                pass: false,
                metric: f64::NAN,
                tolerance: f64::NAN,
                detail: format!("error: {e}"),
                grads: Vec::new(),
            }),
        })
        .collect();
    if suite == Suite::All {
        let missing = uncovered_ops();
        rows.push(CheckRow {
            suite: "all",
            name: "op_coverage",
            outcome: CheckOutcome::within(
                missing.len() as f64,
                0.0,
                if missing.is_empty() {
                    format!("{} operations covered", REQUIRED_OPS.len())
                } else {
                    format!("uncovered: {}", missing.join(" "))
                },
            ),
        });
    }
    CheckReport { rows }
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.pass)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.outcome.pass).count()
    }

    /// Pass/fail table, followed by the failing gradient rows of any failed check.
    pub fn table(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.suite.len() + r.name.len() + 1).max().unwrap_or(0).max(5);
        let mut s = String::new();
        writeln!(s, "{:<6} {:<name_w$} {:>10} {:>10}  detail", "result", "check", "metric", "tol").unwrap();
        for r in &self.rows {
            let o = &r.outcome;
            writeln!(
                s,
                "{:<6} {:<name_w$} {:>10.3e} {:>10.1e}  {}",
                if o.pass { "PASS" } else { "FAIL" },
                format!("{}/{}", r.suite, r.name),
                o.metric,
                o.tolerance,
                o.detail
            )
            .unwrap();
        }
        for r in self.rows.iter().filter(|r| !r.outcome.pass) {
            for g in r.outcome.grads.iter().filter(|g| !g.pass) {
                writeln!(s, "\nfailing gradient rows of {}/{}:", r.suite, r.name).unwrap();
                s.push_str(&g.failing_rows_csv());
            }
        }
        writeln!(s, "\n{} checks, {} failed", self.rows.len(), self.failures()).unwrap();
        s
    }

    /// Writes `checks.csv` and `gradients.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir).map_err(|e| crate::CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut w = csv::Writer::from_path(dir.join("checks.csv")).map_err(csv_err)?;
        w.write_record(["suite", "check", "pass", "metric", "tolerance", "detail"]).map_err(csv_err)?;
        for r in &self.rows {
            let o = &r.outcome;
            w.write_record([
                r.suite.to_string(),
                r.name.to_string(),
                o.pass.to_string(),
                format!("{:e}", o.metric),
                format!("{:e}", o.tolerance),
                o.detail.clone(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        let grads: Vec<GradReport> = self
            .rows
            .iter()
            .flat_map(|r| {
                r.outcome.grads.iter().cloned().map(move |mut g| {
                    g.parameter_name = format!("{}/{}", r.name, g.parameter_name);
                    g
                })
            })
            .collect();
        write_reports_csv(dir.join("gradients.csv"), &grads)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::CliError {
    crate::CliError::Io(e.to_string())
}

// ---- shared helpers ----

fn random_shape(rng: &mut StreamRng, max_n: usize, max_c: usize, max_hw: usize) -> Shape4 {
    Shape4::new(
        rng.gen_range(1..=max_n),
        rng.gen_range(1..=max_c),
        rng.gen_range(1..=max_hw),
        rng.gen_range(1..=max_hw),
    )
}

fn constant_scale(like: &Tensor4, k: f64) -> Result<ScaleMap> {
    let s = like.shape();
    ScaleMap::constant(s.n, s.h, s.w, k, ScaleConversion::standard(1.0)?)
}

fn random_scale(rng: &mut StreamRng, like: &Tensor4, lo: f64, hi: f64) -> Result<ScaleMap> {
    let s = like.shape();
    ScaleMap::new(uniform_tensor(rng, Shape4::new(s.n, 1, s.h, s.w), lo, hi), ScaleConversion::standard(1.0)?)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---- geometry ----

fn projection_composition(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("projection_composition").rng("draws");
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let l = rng.gen_range(0.01..10.0);
        let f = CameraIntrinsics::new(rng.gen_range(50.0..2000.0))?;
        let (d1, d2) = (rng.gen_range(0.1..200.0), rng.gen_range(0.1..200.0));
        let direct = project_length(l, &f, d2)?;
        let composed = rescale_length(project_length(l, &f, d1)?, d1, d2)?;
        worst = worst.max(rel(direct, composed));
    }
    Ok(CheckOutcome::within(worst, ctx.reduction_tol, "1000 draws of rescale(project(l, D1), D1, D2) vs project(l, D2)"))
}

fn scale_monotone(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("scale_monotone").rng("ladders");
    let mut violations = 0usize;
    for _ in 0..100 {
        let conv = ScaleConversion::standard(rng.gen_range(0.5..50.0))?;
        let mut ladder: Vec<f64> = (0..20).map(|_| rng.gen_range(0.05..200.0)).collect();
        ladder.sort_by(f64::total_cmp);
        let scales = ladder.iter().map(|&d| depth_to_scale(d, &conv)).collect::<Result<Vec<_>>>()?;
        violations += scales.windows(2).filter(|w| w[1] > w[0]).count();
    }
    Ok(CheckOutcome::within(violations as f64, 0.0, "100 sorted ladders; metric counts increases"))
}

fn scale_conservation(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("scale_conservation").rng("draws");
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let d_r = rng.gen_range(0.5..50.0);
        let conv = ScaleConversion::standard(d_r)?;
        // inside [D_r/3, 3 D_r] the [1, 9] clamp is inactive
        let d = rng.gen_range(d_r / 3.0..3.0 * d_r);
        let k = depth_to_scale(d, &conv)?;
        worst = worst.max(rel(k * d, 3.0 * d_r));
    }
    Ok(CheckOutcome::within(worst, ctx.reduction_tol, "k_d * D vs k_r * D_r, unclamped"))
}

fn scale_map_reference(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("scale_map_reference").rng("map");
    let depth = uniform_tensor(&mut rng, Shape4::new(2, 1, 9, 11), 0.5, 40.0);
    let d_r = reference_depth_from_map(&depth)?;
    let mut worst = rel(d_r, depth.mean());
    let conv = ScaleConversion::standard(d_r)?;
    let map = depth_map_to_scale_map(&depth, &conv)?;
    let s_u = normalize_scale_map(&map);
    for (i, &d) in depth.data().iter().enumerate() {
        let k = (3.0 * d_r / d).clamp(1.0, 9.0);
        worst = worst.max(rel(map.values().data()[i], k));
        worst = worst.max((s_u.data()[i] - (k - 3.0) / 3.0).abs());
    }
    let flat = depth_map_to_scale_map(&Tensor4::full(depth.shape(), d_r), &conv)?;
    let flat_su = normalize_scale_map(&flat).max_abs();
    Ok(CheckOutcome::within(worst.max(flat_su), ctx.reduction_tol, "mean reference, per-pixel scale and S_U; D == D_r gives S_U = 0"))
}

// ---- conv ----

fn standard_vs_naive(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("standard_vs_naive").rng("instances");
    let mut worst = 0.0_f64;
    for i in 0..10 {
        let shape = random_shape(&mut rng, 2, 4, 12);
        let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let out_c = rng.gen_range(1..=4);
        let k3 = ConvKernel::random(&mut rng, out_c, shape.c, 3);
        worst = worst.max(conv2d_standard(&x, &k3)?.max_abs_diff(&conv2d_naive_oracle(&x, &k3, 1)?)?);
        // the general same-padded path at sizes 1 and 5
        let k = ConvKernel::random(&mut rng, out_c, shape.c, [1, 5][i % 2]);
        worst = worst.max(conv2d(&x, &k)?.max_abs_diff(&conv2d_naive_oracle(&x, &k, 1)?)?);
    }
    Ok(CheckOutcome::within(worst, ctx.oracle_tol, "10 instances at 3x3, plus 1x1 and 5x5 same-padded"))
}

fn reduction_scale3(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("reduction_scale3").rng("instances");
    let mut worst = 0.0_f64;
    for _ in 0..25 {
        let shape = random_shape(&mut rng, 2, 8, 32);
        let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let out_c = rng.gen_range(1..=8);
        let k = ConvKernel::random(&mut rng, out_c, shape.c, 3);
        let a = dcsconv_forward(&x, &k, &constant_scale(&x, 3.0)?)?;
        worst = worst.max(a.max_rel_diff(&conv2d_standard(&x, &k)?)?);
    }
    Ok(CheckOutcome::within(worst, ctx.reduction_tol, "25 instances, scale == 3 vs standard conv"))
}

fn dilation_scale5(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("dilation_scale5").rng("instances");
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let shape = random_shape(&mut rng, 2, 6, 24);
        let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let out_c = rng.gen_range(1..=6);
        let k = ConvKernel::random(&mut rng, out_c, shape.c, 3);
        let a = dcsconv_forward(&x, &k, &constant_scale(&x, 5.0)?)?;
        worst = worst.max(a.max_rel_diff(&conv2d_naive_oracle(&x, &k, 2)?)?);
    }
    Ok(CheckOutcome::within(worst, ctx.reduction_tol, "10 instances, scale == 5 vs dilation 2"))
}

/// `(sum of taps) * input + bias`, per output channel.
pub fn collapsed_conv(x: &Tensor4, k: &ConvKernel) -> Tensor4 {
    let s = x.shape();
    let tap_sum: Vec<Vec<f64>> = (0..k.out_channels())
        .map(|o| (0..k.in_channels()).map(|i| k.taps(o, i).iter().sum()).collect())
        .collect();
    Tensor4::from_fn(s.with_channels(k.out_channels()), |n, o, y, xx| {
        k.bias_at(o) + (0..s.c).map(|i| tap_sum[o][i] * x.at(n, i, y, xx)).sum::<f64>()
    })
}

fn collapse_scale1(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("collapse_scale1").rng("instances");
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let shape = random_shape(&mut rng, 2, 6, 24);
        let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let out_c = rng.gen_range(1..=6);
        let k = ConvKernel::random(&mut rng, out_c, shape.c, 3);
        let a = dcsconv_forward(&x, &k, &constant_scale(&x, 1.0)?)?;
        worst = worst.max(a.max_rel_diff(&collapsed_conv(&x, &k))?);
    }
    Ok(CheckOutcome::within(worst, ctx.reduction_tol, "10 instances, scale == 1 vs (sum w) * x + b"))
}

fn glsconv_constant_head(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("glsconv_constant_head").rng("head");
    let x = uniform_tensor(&mut rng, Shape4::new(2, 3, 10, 9), -1.0, 1.0);
    let kernel = ConvKernel::random(&mut rng, 4, 3, 3);
    let d_r = 2.0;
    let conv = ScaleConversion::standard(d_r)?;
    let mut projection = ConvKernel::zeros(1, 3, 1);
    let z = 1.3;
    projection.bias.data_mut()[0] = z;
    let head = ScaleHeadParams::new(projection, DepthToScale::Geometric, conv, 1e-3)?;
    let depth = (1.0 + z.exp()).ln() + 1e-3;
    let k = conv.clamp(3.0 * d_r / depth);
    let (out, scale) = glsconv_forward(&x, &kernel, &head)?;
    let expect = dcsconv_forward(&x, &kernel, &constant_scale(&x, k)?)?;
    let scale_dev = scale.values().data().iter().map(|&v| rel(v, k)).fold(0.0, f64::max);
    Ok(CheckOutcome::within(
        out.max_rel_diff(&expect)?.max(scale_dev),
        ctx.reduction_tol,
        format!("constant head predicts k = {k:.6}; output vs DcSConv at that scale"),
    ))
}

// ---- dmsf ----

fn branch_sizes() -> [f64; 3] {
    DMSF_BRANCH_SIZES.map(|k| k as f64)
}

fn weights_fixture(_ctx: &CheckContext) -> Result<CheckOutcome> {
    let w = dmsf_weights(3.0, branch_sizes(), 10.0)?;
    // scalar evaluation without max subtraction
    let g = branch_sizes().map(|k| (-(3.0 - k).powi(2) / 200.0).exp().exp());
    let z: f64 = g.iter().sum();
    let scalar = g.map(|v| v / z);
    let fixture = [0.33113, 0.33775, 0.33113];
    let dev_fixture = (0..3).map(|i| (w[i] - fixture[i]).abs()).fold(0.0, f64::max);
    let dev_scalar = (0..3).map(|i| (w[i] - scalar[i]).abs()).fold(0.0, f64::max);
    Ok(CheckOutcome::within(
        dev_fixture,
        1e-5,
        format!("weights(3, sigma 10) = ({:.5}, {:.5}, {:.5})", w[0], w[1], w[2]),
    )
    .require(dev_scalar <= 1e-12, "scalar evaluation within 1e-12"))
}

fn weights_simplex(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("weights_simplex").rng("draws");
    let mut worst = 0.0_f64;
    let mut wrong_argmax = 0usize;
    let sizes = branch_sizes();
    for _ in 0..1000 {
        let k_d = rng.gen_range(0.5..10.0);
        let sigma = rng.gen_range(0.2..20.0);
        let w = dmsf_weights(k_d, sizes, sigma)?;
        worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
        let argmax = (0..3).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
        let nearest = (0..3)
            .min_by(|&a, &b| (k_d - sizes[a]).abs().total_cmp(&(k_d - sizes[b]).abs()))
            .unwrap_or(0);
        // exact ties between neighbours are left out
        let tie = (0..3).any(|b| b != nearest && (k_d - sizes[b]).abs() == (k_d - sizes[nearest]).abs());
        if argmax != nearest && !tie {
            wrong_argmax += 1;
        }
    }
    Ok(CheckOutcome::within(worst, 1e-12, "1000 draws; metric is |sum - 1|")
        .require(wrong_argmax == 0, &format!("argmax is the nearest branch ({wrong_argmax} misses)")))
}

fn dmsf_oracle_check(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("dmsf_pixel_oracle").rng("instances");
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let shape = random_shape(&mut rng, 2, 3, 10);
        let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let out_c = rng.gen_range(1..=3);
        let p = DmsfParams::random(&mut rng, out_c, shape.c, ctx.sigma)?;
        let scale = random_scale(&mut rng, &x, 1.0, 9.0)?;
        worst = worst.max(dmsf_forward(&x, &p, &scale)?.max_abs_diff(&dmsf_pixel_oracle(&x, &p, &scale)?)?);
    }
    Ok(CheckOutcome::within(worst, ctx.oracle_tol, format!("10 instances, sigma {}", ctx.sigma)))
}

// ---- fusion ----

fn se_oracle_check(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("se_oracle").rng("instances");
    let mut worst = 0.0_f64;
    let mut in_range = true;
    for _ in 0..10 {
        let c = rng.gen_range(1..=6);
        let p = DcsfParams::random(&mut rng, c, c);
        let n = rng.gen_range(1..=2);
        let feat = uniform_tensor(&mut rng, Shape4::new(n, 2 * c, 7, 6), -2.0, 2.0);
        let gate = se_channel_attention(&feat, &p.se)?;
        in_range &= gate.data().iter().all(|&g| g > 0.0 && g < 1.0);
        worst = worst.max(gate.max_abs_diff(&se_oracle(&feat, &p.se)?)?);
    }
    Ok(CheckOutcome::within(worst, ctx.oracle_tol, "10 instances").require(in_range, "gates in (0, 1)"))
}

fn spatial_attention(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("spatial_attention").rng("instances");
    let mut worst = 0.0_f64;
    let mut in_range = true;
    for _ in 0..5 {
        let c = rng.gen_range(1..=4);
        let shape = Shape4::new(rng.gen_range(1..=2), c, rng.gen_range(3..=9), rng.gen_range(3..=9));
        let p = DcsfParams::random(&mut rng, c, c);
        let fd = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let fc = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let scale = random_scale(&mut rng, &fd, 1.0, 9.0)?;
        let (m_c, m_s) = dcsf_attention(&fd, &fc, &scale, &p)?;
        let u = Tensor4::concat_channels(&[&fd, &fc])?;
        let u_v = Tensor4::from_fn(u.shape(), |n, ch, y, x| m_c.at(n, ch, 0, 0) * u.at(n, ch, y, x));
        let direct = dcsf_spatial_attention(&u_v, &normalize_scale_map(&scale), &p)?;
        in_range &= direct.data().iter().all(|&v| v > 0.0 && v < 1.0);
        worst = worst.max(direct.max_abs_diff(&m_s)?);
    }
    Ok(CheckOutcome::within(worst, ctx.oracle_tol, "5 instances, standalone vs in-block spatial map")
        .require(in_range, "attention in (0, 1)"))
}

fn dcsf_oracle_check(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("dcsf_oracle").rng("instances");
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let c = rng.gen_range(1..=4);
        let shape = Shape4::new(rng.gen_range(1..=2), c, rng.gen_range(2..=9), rng.gen_range(2..=9));
        let out_c = rng.gen_range(1..=4);
        let p = DcsfParams::random(&mut rng, c, out_c);
        let fd = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let fc = uniform_tensor(&mut rng, shape, -1.0, 1.0);
        let scale = random_scale(&mut rng, &fd, 1.0, 9.0)?;
        worst = worst.max(dcsf_forward(&fd, &fc, &scale, &p)?.max_abs_diff(&dcsf_oracle(&fd, &fc, &scale, &p)?)?);
    }
    Ok(CheckOutcome::within(worst, ctx.oracle_tol, "10 instances"))
}

// ---- decoder ----

fn depth_head_range(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("depth_head_range").rng("head");
    let range = DepthRange::new(0.5, 60.0)?;
    let feat = uniform_tensor(&mut rng, Shape4::new(2, 5, 8, 8), -30.0, 30.0);
    let head = ConvKernel::random(&mut rng, 1, 5, 3);
    let depth = feature_to_depth(&feat, &head, &range)?;
    let logits = conv2d(&feat, &head)?;
    let expect = logits.map(|z| range.depth_from_logit(z));
    let in_range = depth.data().iter().all(|&d| d >= range.min_depth && d <= range.max_depth);
    Ok(CheckOutcome::within(depth.max_abs_diff(&expect)?, ctx.oracle_tol, "depth = 1 / (1/max + (1/min - 1/max) sigmoid(z))")
        .require(in_range, "depth within [min, max]"))
}

fn level_composition(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("level_composition").rng("level");
    let p = DcsdLevelParams::random(&mut rng, 6, 3, 4);
    let prev = uniform_tensor(&mut rng, Shape4::new(1, 6, 4, 5), -1.0, 1.0);
    let enc = uniform_tensor(&mut rng, Shape4::new(1, 3, 8, 10), -1.0, 1.0);
    let low = random_scale(&mut rng, &prev, 1.0, 9.0)?;
    let high = random_scale(&mut rng, &enc, 1.0, 9.0)?;
    let range = DepthRange::default();

    let dec = dcsf_forward(&dcsconv_forward(&prev, &p.dec_dcsc, &low)?, &conv2d(&prev, &p.dec_conv)?, &low, &p.dec_fuse)?;
    let enh = dcsf_forward(&dcsconv_forward(&enc, &p.enc_dcsc, &high)?, &enc, &high, &p.enc_fuse)?;
    let merged = Tensor4::concat_channels(&[&resize(&dec, 8, 10, ResizeMode::Nearest)?, &enh])?;
    let fused = dcsf_forward(
        &dcsconv_forward(&merged, &p.merge_dcsc, &high)?,
        &conv2d(&merged, &p.merge_conv)?,
        &high,
        &p.merge_fuse,
    )?;
    let f_expect = conv2d(&fused, &p.squeeze)?;
    let d_expect = feature_to_depth(&f_expect, &p.depth_head, &range)?;

    let (f, d) = dcsd_decode_level(&prev, &enc, &low, &high, &p, &range)?;
    let shapes_ok = f.shape() == Shape4::new(1, 4, 8, 10) && d.shape() == Shape4::new(1, 1, 8, 10);
    Ok(CheckOutcome::within(
        f.max_abs_diff(&f_expect)?.max(d.max_abs_diff(&d_expect)?),
        0.0,
        "level output vs explicit composition, 1x6x4x5 + 1x3x8x10 -> 1x4x8x10",
    )
    .require(shapes_ok, "output shapes"))
}

fn decoder_setup(seed: &SeedStream, channels: usize, size: usize) -> Result<(Vec<Tensor4>, DecoderParams)> {
    let shape = DecoderShape::uniform(channels);
    let params = DecoderParams::random(&mut seed.rng("params"), &shape);
    let pyramid = random_pyramid(&seed.child("pyramid"), 1, &shape, size, size)?;
    Ok((pyramid, params))
}

fn constant_prior_reduction(ctx: &CheckContext) -> Result<CheckOutcome> {
    let streams = ctx.streams("constant_prior_reduction");
    let (pyramid, params) = decoder_setup(&streams, 4, 64)?;
    let d_r = streams.rng("reference").gen_range(1.0..30.0);
    let prior: Vec<Tensor4> = pyramid.iter().map(|f| Tensor4::full(f.shape().with_channels(1), d_r)).collect();
    let opts = DecoderOptions::default();
    let scaled = decoder_forward(&pyramid, &params, &opts, Guidance::Prior(&prior))?;
    let standard = DecoderOptions { mode: ConvMode::Standard, ..opts };
    let plain = decoder_forward(&pyramid, &params, &standard, Guidance::SelfGuided)?;
    let mut worst = 0.0_f64;
    for (a, b) in scaled.iter().zip(&plain) {
        worst = worst.max(a.max_abs_diff(b)?);
    }
    Ok(CheckOutcome::within(worst, 1e-10, format!("1x4x64x64 pyramid, prior == {d_r:.4} vs standard-conv decoder")))
}

/// Per-pixel scale `clamp(3 * mean(guide) / guide)`.
pub fn expected_scale(guide: &Tensor4, scale_min: f64, scale_max: f64) -> Tensor4 {
    let d_r = guide.mean();
    guide.map(|d| (3.0 * d_r / d).clamp(scale_min, scale_max))
}

fn self_guidance(ctx: &CheckContext) -> Result<CheckOutcome> {
    let streams = ctx.streams("self_guidance");
    let (pyramid, params) = decoder_setup(&streams, 4, 32)?;
    let opts = DecoderOptions::default();
    let mut rng = streams.rng("perturbation");
    let bumps: Vec<Tensor4> = pyramid.iter().map(|f| uniform_tensor(&mut rng, f.shape().with_channels(1), 0.5, 2.0)).collect();
    let inject = |l: usize, d: &Tensor4| d.zip_map(&bumps[l], |a, b| a * b).expect("same dims");
    let plain = decoder_trace(&pyramid, &params, &opts, Guidance::SelfGuided, None)?;
    let t = decoder_trace(&pyramid, &params, &opts, Guidance::SelfGuided, Some(&inject))?;
    let mut worst = 0.0_f64;
    let mut changed = true;
    for l in 0..LEVELS - 1 {
        let guide = inject(l + 1, &t.depths[l + 1]);
        let expect = expected_scale(&guide, opts.policy.scale_min, opts.policy.scale_max);
        worst = worst.max(t.scales[l].low.values().max_abs_diff(&expect)?);
        changed &= !t.scales[l].low.values().bitwise_eq(plain.scales[l].low.values());
    }
    Ok(CheckOutcome::within(worst, ctx.reduction_tol, "injected coarse depth -> next level scale map, pixelwise")
        .require(changed, "injection changes every level"))
}

// ---- gradcheck ----

fn fd_exactness(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("fd_exactness").rng("x");
    let x = uniform_tensor(&mut rng, Shape4::new(1, 2, 3, 4), -2.0, 2.0);
    let numeric = finite_diff_grad(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5, None)?;
    let exact = x.map(|v| 2.0 * v);
    let dev = numeric.max_abs_diff(&exact)?;
    // negative control: one perturbed element must be reported
    let mut off = exact.clone();
    off.data_mut()[5] += 1e-3;
    let control = compare_grads("control", &off, &exact, 1e-4, 1e-8)?;
    let flagged = !control.pass && control.failures.iter().map(|&p| control.indices[p]).eq([5]);
    Ok(CheckOutcome::within(dev, 1e-9, "gradient of sum x^2 is 2x; a perturbed element is flagged")
        .require(flagged, "perturbed element identified"))
}

fn dcsconv_grads(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("dcsconv_grads").rng("case");
    let shape = Shape4::new(1, 2, 6, 6);
    let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let kernel = ConvKernel::random(&mut rng, 2, 2, 3);
    let probe = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let conv = ScaleConversion::standard(1.0)?;
    let field = keep_off_odd_integers(&uniform_tensor(&mut rng, Shape4::new(1, 1, 6, 6), 1.2, 8.8), 0.1);
    let scale = ScaleMap::new(field.clone(), conv)?;
    let loss = |x: &Tensor4, k: &ConvKernel, s: &ScaleMap| dcsconv_forward(x, k, s).expect("dims").dot(&probe).expect("dims");

    let mut g = dcsconv_backward(&x, &kernel, &scale, &probe, ScaleGradient::Propagate)?;
    if ctx.sabotage_grad {
        let w = g.kernel.weight.data_mut();
        let i = (0..w.len()).max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs())).unwrap_or(0);
        w[i] = -w[i];
    }
    let fd = ctx.fd(ctx.rel_tol, None);
    let mut reports = vec![check_tensor_grad("input", &x, &g.input, |p| loss(p, &kernel, &scale), &fd)?];
    reports.extend(check_param_grads(&kernel, &g.kernel, |k| loss(&x, k, &scale), &fd)?);
    let gs = g.scale.take().ok_or_else(|| dcs_core::Error::Domain("scale gradient missing".into()))?;
    reports.push(check_tensor_grad("scale", &field, &gs, |p| loss(&x, &kernel, &ScaleMap::new(p.clone(), conv).expect("positive")), &fd)?);
    Ok(CheckOutcome::gradients(reports, ctx.rel_tol))
}

fn glsconv_grads(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("glsconv_grads").rng("case");
    let x = uniform_tensor(&mut rng, Shape4::new(1, 2, 6, 6), -1.0, 1.0);
    let kernel = ConvKernel::random(&mut rng, 2, 2, 3);
    let conv = ScaleConversion::standard(1.0)?;
    let mut head = ScaleHeadParams::random(&mut rng, 2, DepthToScale::affine(0.6, 1.3), conv)?;
    // keeps learned scales inside (1.1, 2.9), clear of the kinks at 1 and 3
    head.projection.weight = head.projection.weight.map(|w| 0.3 * w);
    let probe = uniform_tensor(&mut rng, Shape4::new(1, 2, 6, 6), -1.0, 1.0);
    let g = glsconv_backward(&x, &kernel, &head, &probe)?;
    let loss = |x: &Tensor4, k: &ConvKernel, h: &ScaleHeadParams| glsconv_forward(x, k, h).expect("dims").0.dot(&probe).expect("dims");
    let fd = ctx.fd(ctx.rel_tol, None);
    let mut reports = vec![check_tensor_grad("input", &x, &g.input, |p| loss(p, &kernel, &head), &fd)?];
    reports.extend(check_param_grads(&kernel, &g.kernel, |k| loss(&x, k, &head), &fd)?);
    for mut r in check_param_grads(&head, &g.head, |h| loss(&x, &kernel, h), &fd)? {
        r.parameter_name = format!("head.{}", r.parameter_name);
        reports.push(r);
    }
    Ok(CheckOutcome::gradients(reports, ctx.rel_tol))
}

fn dcsf_grads(ctx: &CheckContext) -> Result<CheckOutcome> {
    let mut rng = ctx.streams("dcsf_grads").rng("case");
    let shape = Shape4::new(1, 2, 5, 5);
    let fd_in = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let fc = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let params = DcsfParams::random(&mut rng, 2, 2);
    let scale = random_scale(&mut rng, &fd_in, 1.0, 9.0)?;
    let probe = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let loss = |a: &Tensor4, b: &Tensor4, p: &DcsfParams| dcsf_forward(a, b, &scale, p).expect("dims").dot(&probe).expect("dims");
    let g = dcsf_backward(&fd_in, &fc, &scale, &params, &probe)?;
    let fd = ctx.fd(ctx.rel_tol, None);
    let mut reports = vec![
        check_tensor_grad("f_dcsc", &fd_in, &g.f_dcsc, |p| loss(p, &fc, &params), &fd)?,
        check_tensor_grad("f_c", &fc, &g.f_c, |p| loss(&fd_in, p, &params), &fd)?,
    ];
    reports.extend(check_param_grads(&params, &g.params, |p| loss(&fd_in, &fc, p), &fd)?);
    Ok(CheckOutcome::gradients(reports, ctx.rel_tol))
}

fn decoder_grads(ctx: &CheckContext) -> Result<CheckOutcome> {
    let streams = ctx.streams("decoder_grads");
    let (pyramid, params) = decoder_setup(&streams, 4, 16)?;
    let mut rng = streams.rng("prior");
    // a supplied prior keeps the scale maps fixed under perturbation
    let prior: Vec<Tensor4> = pyramid.iter().map(|f| uniform_tensor(&mut rng, f.shape().with_channels(1), 0.5, 20.0)).collect();
    let opts = DecoderOptions::default();
    let guidance = Guidance::Prior(&prior);
    let loss = |pyr: &[Tensor4], p: &DecoderParams| decoder_forward(pyr, p, &opts, guidance).expect("dims")[0].mean();
    let finest = pyramid[0].shape().with_channels(1);
    let g = decoder_backward(&pyramid, &params, &opts, guidance, &Tensor4::full(finest, 1.0 / finest.numel() as f64))?;
    let fd = ctx.fd(ctx.decoder_rel_tol, Some(ctx.decoder_fd_elements));
    let mut reports = check_param_grads(&params, &g.params, |p| loss(&pyramid, p), &fd)?;
    for l in 0..LEVELS {
        reports.push(check_tensor_grad(
            &format!("pyramid{l}"),
            &pyramid[l],
            &g.features[l],
            |probe| {
                let mut pyr = pyramid.clone();
                pyr[l] = probe.clone();
                loss(&pyr, &params)
            },
            &fd,
        )?);
    }
    let complete = reports.len() == params.named_tensors().len() + LEVELS;
    Ok(CheckOutcome::gradients(reports, ctx.decoder_rel_tol).require(complete, "every tensor checked"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_covers_required_ops() {
        assert!(uncovered_ops().is_empty(), "{:?}", uncovered_ops());
        let mut names: Vec<_> = registry().iter().map(|c| c.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), registry().len());
    }

    #[test]
    fn every_suite_has_checks() {
        for s in [Suite::Geometry, Suite::Conv, Suite::Dmsf, Suite::Fusion, Suite::Decoder, Suite::Gradcheck] {
            assert!(registry().iter().any(|c| c.suite == s), "{s:?}");
        }
    }

    #[test]
    fn geometry_suite_passes() {
        let r = run_suite(Suite::Geometry, &CheckContext::default());
        assert!(r.pass(), "{}", r.table());
        assert_eq!(r.rows.len(), 4);
    }

    #[test]
    fn collapsed_conv_on_identity() {
        let x = uniform_tensor(&mut SeedStream::new(1).rng("x"), Shape4::new(1, 2, 3, 3), -1.0, 1.0);
        assert!(collapsed_conv(&x, &ConvKernel::identity(2)).bitwise_eq(&x));
    }
}
