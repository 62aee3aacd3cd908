use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ssta_cli::config::{parse_triple, BenchMode, RawConfig};
use ssta_cli::{commands, exit_code};
use ssta_core::{CombineMode, RedundancyNorm};

/// Selective and sliding tile attention engine: verification, benchmarks,
/// mask export, and work accounting for 3D token grids.
#[derive(Parser)]
#[command(name = "ssta", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the correctness property suite at the configured shape
    Verify {
        #[command(flatten)]
        shape: ShapeArgs,
        /// Flip one mask bit after attention ran (negative control)
        #[arg(long, hide = true)]
        corrupt_mask: bool,
    },
    /// Time dense and/or sparse attention and emit a JSON report
    Bench {
        #[command(flatten)]
        shape: ShapeArgs,
        /// Which attention paths to time
        #[arg(long = "bench-mode", value_enum, default_value_t = BenchModeArg::Both)]
        bench_mode: BenchModeArg,
    },
    /// Export selective/window/combined masks as CSV and PGM heatmaps
    Mask {
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Emit the analytic density and MAC report for the configured shape
    Flops {
        #[command(flatten)]
        shape: ShapeArgs,
    },
}

#[derive(Args)]
struct ShapeArgs {
    /// Token grid as F,H,W (frames, height, width)
    #[arg(long, value_parser = parse_triple)]
    grid: Option<(usize, usize, usize)>,
    /// Attention heads
    #[arg(long)]
    heads: Option<usize>,
    /// Per-head channel dimension
    #[arg(long = "head-dim")]
    head_dim: Option<usize>,
    /// Tile extents as t,h,w; each must divide the matching grid axis
    #[arg(long, value_parser = parse_triple)]
    tiles: Option<(usize, usize, usize)>,
    /// Sliding window extents in blocks as t,h,w; each odd
    #[arg(long, value_parser = parse_triple)]
    window: Option<(usize, usize, usize)>,
    /// Key blocks kept per query block by the selective mask
    #[arg(long)]
    topk: Option<usize>,
    /// Weight of pooled query-key similarity in block importance
    #[arg(long)]
    lambda: Option<f64>,
    /// Weight of intra-block redundancy in block importance
    #[arg(long)]
    beta: Option<f64>,
    /// Mask combination: and = intersection, or = union
    #[arg(long, value_enum)]
    mode: Option<CombineArg>,
    /// Always keep each query block's own diagonal bit
    #[arg(long = "force-self")]
    force_self: Option<bool>,
    /// Redundancy normalization: mean = divide by N*(N-1), paper = by N-1
    #[arg(long = "redundancy-norm", value_enum)]
    redundancy_norm: Option<RedundancyNormArg>,
    /// Fixture seed; fixed seeds reproduce bitwise
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timed repetitions per mode
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Untimed warmup runs per mode
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Engine threads: 1 = deterministic reference, 0 = all cores
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Named shape preset; explicit flags override preset values
    #[arg(long)]
    preset: Option<String>,
    /// Report file (bench/flops) or output directory (mask)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombineArg {
    And,
    Or,
}

#[derive(Clone, Copy, ValueEnum)]
enum RedundancyNormArg {
    Mean,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchModeArg {
    Dense,
    Sparse,
    Both,
}

impl ShapeArgs {
    fn into_raw(self, mode: BenchMode) -> RawConfig {
        RawConfig {
            grid: self.grid,
            heads: self.heads,
            head_dim: self.head_dim,
            tiles: self.tiles,
            window: self.window,
            topk: self.topk,
            lambda: self.lambda,
            beta: self.beta,
            combine_mode: self.mode.map(|m| match m {
                CombineArg::And => CombineMode::Intersection,
                CombineArg::Or => CombineMode::Union,
            }),
            force_self: self.force_self,
            redundancy_norm: self.redundancy_norm.map(|n| match n {
                RedundancyNormArg::Mean => RedundancyNorm::Mean,
                RedundancyNormArg::Paper => RedundancyNorm::NMinusOne,
            }),
            seed: self.seed,
            repeats: self.repeats,
            warmup: self.warmup,
            threads: self.threads,
            mode,
            preset: self.preset,
        }
    }
}

fn run(cli: Cli) -> ssta_core::Result<i32> {
    match cli.command {
        Command::Verify {
            shape,
            corrupt_mask,
        } => {
            let config = shape.into_raw(BenchMode::Both).resolve()?;
            commands::verify::run(&config, corrupt_mask, &mut std::io::stdout())
        }
        Command::Bench { shape, bench_mode } => {
            let mode = match bench_mode {
                BenchModeArg::Dense => BenchMode::Dense,
                BenchModeArg::Sparse => BenchMode::Sparse,
                BenchModeArg::Both => BenchMode::Both,
            };
            let out = shape.out.clone();
            let config = shape.into_raw(mode).resolve()?;
            commands::bench::run(&config, out.as_deref())
        }
        Command::Mask { shape } => {
            let out = shape.out.clone();
            let config = shape.into_raw(BenchMode::Both).resolve()?;
            commands::mask::run(&config, out.as_deref())
        }
        Command::Flops { shape } => {
            let out = shape.out.clone();
            let config = shape.into_raw(BenchMode::Both).resolve()?;
            commands::flops::run(&config, out.as_deref())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    };
    std::process::exit(code);
}
