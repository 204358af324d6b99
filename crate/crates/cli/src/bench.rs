//! `dcs bench`: wall-clock timing of single operators at 1 and N workers.
//!
//! Before any timing, the N-worker output must equal the 1-worker output bit
//! for bit.

use std::fmt::Write as _;
use std::time::Instant;

use clap::ValueEnum;
use dcs_core::conv::{conv2d_standard, dcsconv_forward, dmsf_forward, ConvKernel, DmsfParams};
use dcs_core::fusion::{dcsf_forward, DcsfParams};
use dcs_core::geometry::{ScaleConversion, ScaleMap};
use dcs_core::rng::{uniform_tensor, SeedStream};
use dcs_core::{Shape4, Tensor4};
use rayon::ThreadPool;

use crate::{CliError, CliResult};

pub const BENCH_CHANNELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchOp {
    Conv,
    Dcsconv,
    Dmsf,
    Dcsf,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] = [BenchOp::Conv, BenchOp::Dcsconv, BenchOp::Dmsf, BenchOp::Dcsf];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Conv => "conv",
            BenchOp::Dcsconv => "dcsconv",
            BenchOp::Dmsf => "dmsf",
            BenchOp::Dcsf => "dcsf",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub ops: Vec<BenchOp>,
    pub width: usize,
    pub height: usize,
    pub iters: usize,
    pub threads: usize,
    pub seed: u64,
    pub sigma: f64,
    /// Negative control: perturbs the N-worker output before the equality check.
    pub sabotage_determinism: bool,
}

/// Inputs for one operator on `1×16×h×w`.
struct Workload {
    input: Tensor4,
    second: Tensor4,
    scale: ScaleMap,
    kernel: ConvKernel,
    dmsf: DmsfParams,
    dcsf: DcsfParams,
}

impl Workload {
    fn new(cfg: &BenchConfig) -> CliResult<Self> {
        let mut rng = SeedStream::new(cfg.seed).rng("bench");
        let shape = Shape4::new(1, BENCH_CHANNELS, cfg.height, cfg.width);
        let c = BENCH_CHANNELS;
        Ok(Self {
            input: uniform_tensor(&mut rng, shape, -1.0, 1.0),
            second: uniform_tensor(&mut rng, shape, -1.0, 1.0),
            scale: ScaleMap::new(
                uniform_tensor(&mut rng, shape.with_channels(1), 1.0, 9.0),
                ScaleConversion::standard(1.0)?,
            )?,
            kernel: ConvKernel::random(&mut rng, c, c, 3),
            dmsf: DmsfParams::random(&mut rng, c, c, cfg.sigma)?,
            dcsf: DcsfParams::random(&mut rng, c, c),
        })
    }

    fn run(&self, op: BenchOp) -> CliResult<Tensor4> {
        Ok(match op {
            BenchOp::Conv => conv2d_standard(&self.input, &self.kernel)?,
            BenchOp::Dcsconv => dcsconv_forward(&self.input, &self.kernel, &self.scale)?,
            BenchOp::Dmsf => dmsf_forward(&self.input, &self.dmsf, &self.scale)?,
            BenchOp::Dcsf => dcsf_forward(&self.input, &self.second, &self.scale, &self.dcsf)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Timing {
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn summarize(mut samples: Vec<f64>) -> Timing {
    samples.sort_by(f64::total_cmp);
    Timing {
        median_ms: percentile(&samples, 0.5),
        p10_ms: percentile(&samples, 0.1),
        p90_ms: percentile(&samples, 0.9),
    }
}

fn time(pool: &ThreadPool, work: &Workload, op: BenchOp, iters: usize) -> CliResult<Timing> {
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        let out = pool.install(|| work.run(op))?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    Ok(summarize(samples))
}

fn pool(threads: usize) -> CliResult<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start {threads} worker threads: {e}")))
}

/// Runs every requested operator; returns the timing table.
pub fn run_bench(cfg: &BenchConfig) -> CliResult<String> {
    if cfg.iters == 0 || cfg.threads == 0 {
        return Err(CliError::Usage("--iters and --threads must be at least 1".into()));
    }
    let work = Workload::new(cfg)?;
    let single = pool(1)?;
    let multi = pool(cfg.threads)?;
    let mut table = String::new();
    writeln!(
        table,
        "{:<8} {:>14} {:>7} {:>12} {:>12} {:>12}",
        "op", "size", "threads", "median_ms", "p10_ms", "p90_ms"
    )
    .unwrap();
    for &op in &cfg.ops {
        let reference = single.install(|| work.run(op))?;
        let mut parallel = multi.install(|| work.run(op))?;
        if cfg.sabotage_determinism {
            let v = &mut parallel.data_mut()[0];
            *v = f64::from_bits(v.to_bits() ^ 1);
        }
        if !reference.bitwise_eq(&parallel) {
            return Err(CliError::CheckFailed(format!(
                "{}: output at {} threads differs from the single-thread output",
                op.name(),
                cfg.threads
            )));
        }
        let size = format!("1x{BENCH_CHANNELS}x{}x{}", cfg.height, cfg.width);
        let mut counts = vec![1];
        if cfg.threads != 1 {
            counts.push(cfg.threads);
        }
        for t in counts {
            let timing = time(if t == 1 { &single } else { &multi }, &work, op, cfg.iters)?;
            writeln!(
                table,
                "{:<8} {:>14} {:>7} {:>12.3} {:>12.3} {:>12.3}",
                op.name(),
                size,
                t,
                timing.median_ms,
                timing.p10_ms,
                timing.p90_ms
            )
            .unwrap();
        }
    }
    Ok(table)
}
