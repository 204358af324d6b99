//! `dcs demo`: decode a synthetic scene and dump every level as images.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use dcs_core::decoder::{decoder_trace, random_pyramid, DecoderOptions, DecoderParams, DecoderShape, DepthRange, Guidance, LEVELS};
use dcs_core::geometry::{normalize_scale_map, ScaleConversion, ScalePolicy};
use dcs_core::pgm::{write_pgm16, ValueRange};
use dcs_core::rng::SeedStream;
use dcs_core::tensor::{resize, ResizeMode};
use dcs_core::{dten, Tensor4};

use crate::scene::SyntheticScene;
use crate::{at_path, CliError, CliResult};

/// Finest-level size must divide by this so every level halves exactly.
pub const SIZE_MULTIPLE: usize = 1 << (LEVELS - 1);
/// Decoder widths are `BASE_CHANNELS · 2^level`.
pub const BASE_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorMode {
    /// Each level is guided by the depth the coarser level predicted.
    None,
    /// The scene's own depth, resized to every level.
    Given,
    /// A flat prior at the scene's mean depth; every scale map is exactly 3.
    Constant,
}

impl PriorMode {
    fn name(self) -> &'static str {
        match self {
            PriorMode::None => "none",
            PriorMode::Given => "given",
            PriorMode::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub out: PathBuf,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub prior: PriorMode,
    pub range: DepthRange,
    pub scale_min: f64,
    pub scale_max: f64,
}

/// Value range used for the `S_U` images; `S_U = 0` maps to mid-gray.
pub fn scale_diff_range(scale_min: f64, scale_max: f64) -> CliResult<ValueRange> {
    let span = (scale_min - 3.0).abs().max((scale_max - 3.0).abs()) / 3.0;
    let span = if span > 0.0 { span } else { 1.0 };
    Ok(ValueRange::new(-span, span)?)
}

fn write_pair(dir: &Path, stem: &str, t: &Tensor4, range: ValueRange, files: &mut Vec<String>) -> CliResult<()> {
    let pgm = dir.join(format!("{stem}.pgm"));
    write_pgm16(&pgm, t, range).map_err(at_path(&pgm))?;
    let raw = dir.join(format!("{stem}.dten"));
    dten::write_tensor(&raw, t).map_err(at_path(&raw))?;
    files.push(format!("{stem}.pgm"));
    files.push(format!("{stem}.dten"));
    Ok(())
}

fn stats(t: &Tensor4) -> String {
    format!("min {:.6e} max {:.6e} mean {:.6e}", t.min(), t.max(), t.mean())
}

/// Runs the demo and returns the names of the files written, in order.
pub fn run_demo(cfg: &DemoConfig) -> CliResult<Vec<String>> {
    let (h, w) = (cfg.height, cfg.width);
    if h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 {
        return Err(CliError::Usage(format!("demo size {w}x{h} must be a multiple of {SIZE_MULTIPLE} in both dimensions")));
    }
    ScaleConversion::new(3.0, 1.0, cfg.scale_min, cfg.scale_max)?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))?;

    let streams = SeedStream::new(cfg.seed);
    let scene = SyntheticScene::generate(cfg.seed, h, w, cfg.range.min_depth, cfg.range.max_depth)?;
    let shape = DecoderShape::halving(BASE_CHANNELS);
    let params = DecoderParams::random(&mut streams.rng("demo/decoder"), &shape);

    // seeded features with the scene luminance mixed into channel 0
    let mut pyramid = random_pyramid(&streams.child("demo/features"), 1, &shape, h, w)?;
    let lum = scene.luminance();
    for level in pyramid.iter_mut() {
        let s = level.shape();
        let signal = resize(&lum, s.h, s.w, ResizeMode::Bilinear)?;
        for (v, l) in level.plane_mut(0, 0).iter_mut().zip(signal.data()) {
            *v = 0.5 * *v + (l - 0.5);
        }
    }

    let prior: Vec<Tensor4> = match cfg.prior {
        PriorMode::None => Vec::new(),
        PriorMode::Given => pyramid
            .iter()
            .map(|f| resize(&scene.depth, f.shape().h, f.shape().w, ResizeMode::Bilinear))
            .collect::<Result<_, _>>()?,
        PriorMode::Constant => {
            // a multiple of 2^-10 sums exactly, so each map's mean returns d_r bit for bit
            let d_r = (scene.depth.mean() * 1024.0).round() / 1024.0;
            pyramid.iter().map(|f| Tensor4::full(f.shape().with_channels(1), d_r)).collect()
        }
    };
    let guidance = match cfg.prior {
        PriorMode::None => Guidance::SelfGuided,
        _ => Guidance::Prior(&prior),
    };
    let opts = DecoderOptions {
        range: cfg.range,
        policy: ScalePolicy {
            scale_min: cfg.scale_min,
            scale_max: cfg.scale_max,
            ..ScalePolicy::default()
        },
        ..DecoderOptions::default()
    };
    let trace = decoder_trace(&pyramid, &params, &opts, guidance, None)?;

    let depth_range = ValueRange::new(cfg.range.min_depth, cfg.range.max_depth)?;
    let su_range = scale_diff_range(cfg.scale_min, cfg.scale_max)?;
    let mut files = Vec::new();
    let mut summary = String::new();
    writeln!(summary, "seed {}", cfg.seed).unwrap();
    writeln!(summary, "size {w}x{h}").unwrap();
    writeln!(summary, "prior {}", cfg.prior.name()).unwrap();
    writeln!(summary, "depth range [{:e}, {:e}]", cfg.range.min_depth, cfg.range.max_depth).unwrap();
    writeln!(summary, "scale clamp [{:e}, {:e}]", cfg.scale_min, cfg.scale_max).unwrap();
    writeln!(summary, "scale-difference image range [{:e}, {:e}]", su_range.min, su_range.max).unwrap();
    writeln!(summary, "scene depth {}", stats(&scene.depth)).unwrap();
    write_pair(&cfg.out, "scene_depth", &scene.depth, depth_range, &mut files)?;

    for (l, depth) in trace.depths.iter().enumerate() {
        write_pair(&cfg.out, &format!("depth_l{l}"), depth, depth_range, &mut files)?;
        let s = depth.shape();
        writeln!(summary, "level {l} depth {}x{} {}", s.w, s.h, stats(depth)).unwrap();
    }
    // the scale map that steers level l at its own resolution
    for (l, scales) in trace.scales.iter().enumerate() {
        let s_u = normalize_scale_map(&scales.high);
        let name = format!("scale_l{l}.pgm");
        let path = cfg.out.join(&name);
        write_pgm16(&path, &s_u, su_range).map_err(at_path(&path))?;
        files.push(name);
        writeln!(summary, "level {l} scale {}", stats(scales.high.values())).unwrap();
        writeln!(summary, "level {l} scale-difference {}", stats(&s_u)).unwrap();
    }
    let path = cfg.out.join("summary.txt");
    fs::write(&path, &summary).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    files.push("summary.txt".into());
    Ok(files)
}
