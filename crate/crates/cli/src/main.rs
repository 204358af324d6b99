use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcs_cli::bench::{run_bench, BenchConfig, BenchOp};
use dcs_cli::check::{run_suite, CheckContext, Suite};
use dcs_cli::convert::convert;
use dcs_cli::demo::{run_demo, DemoConfig, PriorMode};
use dcs_cli::{parse_clamp, parse_size, CliError, CliResult};
use dcs_core::decoder::DepthRange;

/// Depth-converted-scale convolution toolkit: verification suites, synthetic
/// demos, micro-benchmarks and tensor/image conversion.
#[derive(Parser)]
#[command(name = "dcs", version)]
struct Cli {
    /// Worker threads for the parallel operators.
    #[arg(long, global = true, env = "DCS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run invariant, oracle and gradient checks.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Directory for checks.csv and gradients.csv.
        #[arg(long, default_value = "dcs-check")]
        out: PathBuf,
        /// Relative tolerance of single-operator gradient checks.
        #[arg(long, default_value_t = 1e-4)]
        rel_tol: f64,
        /// Absolute tolerance of gradient checks.
        #[arg(long, default_value_t = 1e-8)]
        abs_tol: f64,
        /// Relative tolerance of the full-decoder gradient check.
        #[arg(long, default_value_t = 1e-3)]
        decoder_rel_tol: f64,
        /// Seeded elements per tensor in the decoder gradient check.
        #[arg(long, default_value_t = 8)]
        decoder_fd_elements: usize,
        /// Branch-weight width of the DMSF checks.
        #[arg(long, default_value_t = dcs_core::conv::DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long, hide = true)]
        sabotage_grad: bool,
    },
    /// Decode a synthetic scene and write depth and scale maps.
    Demo {
        #[arg(long, default_value = "dcs-demo")]
        out: PathBuf,
        /// Finest-level size, both sides multiples of 16.
        #[arg(long, default_value = "64x64", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value = "none")]
        prior: PriorMode,
        #[arg(long, default_value_t = 0.1)]
        min_depth: f64,
        #[arg(long, default_value_t = 100.0)]
        max_depth: f64,
        /// Filter-size clamp of the depth-to-scale conversion.
        #[arg(long, default_value = "1:9", value_parser = parse_clamp)]
        scale_clamp: (f64, f64),
    },
    /// Time single operators at 1 and --threads workers.
    Bench {
        /// Operators to time; all when omitted.
        #[arg(long = "op", value_enum)]
        ops: Vec<BenchOp>,
        #[arg(long, default_value = "128x128", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = dcs_core::conv::DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long, hide = true)]
        sabotage_determinism: bool,
    },
    /// Convert .dten to 16-bit .pgm or back.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Value mapped to 0 and 65535; defaults to the data range (.dten) or the
        /// range recorded in the header (.pgm).
        #[arg(long, value_parser = |s: &str| dcs_cli::parse_pair::<f64>(s, ':'))]
        range: Option<(f64, f64)>,
    },
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start {threads} worker threads: {e}")))?
        .install(f)
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = cli.threads.unwrap_or_else(default_threads);
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Check {
            suite,
            seed,
            out,
            rel_tol,
            abs_tol,
            decoder_rel_tol,
            decoder_fd_elements,
            sigma,
            sabotage_grad,
        } => {
            let ctx = CheckContext {
                seed,
                rel_tol,
                abs_tol,
                decoder_rel_tol,
                decoder_fd_elements,
                sigma,
                sabotage_grad,
                ..CheckContext::default()
            };
            let report = in_pool(threads, || Ok(run_suite(suite, &ctx)))?;
            print!("{}", report.table());
            report.write(&out)?;
            if report.pass() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!("{} of {} checks failed", report.failures(), report.rows.len())))
            }
        }
        Command::Demo {
            out,
            size: (width, height),
            seed,
            prior,
            min_depth,
            max_depth,
            scale_clamp: (scale_min, scale_max),
        } => {
            let range = DepthRange::new(min_depth, max_depth).map_err(|e| CliError::Usage(e.to_string()))?;
            let cfg = DemoConfig {
                out,
                width,
                height,
                seed,
                prior,
                range,
                scale_min,
                scale_max,
            };
            let files = in_pool(threads, || run_demo(&cfg))?;
            for f in files {
                println!("{f}");
            }
            Ok(())
        }
        Command::Bench {
            ops,
            size: (width, height),
            iters,
            seed,
            sigma,
            sabotage_determinism,
        } => {
            let cfg = BenchConfig {
                ops: if ops.is_empty() { BenchOp::ALL.to_vec() } else { ops },
                width,
                height,
                iters,
                threads,
                seed,
                sigma,
                sabotage_determinism,
            };
            print!("{}", run_bench(&cfg)?);
            Ok(())
        }
        Command::Convert { input, output, range } => {
            println!("{}", convert(&input, &output, range)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dcs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
