use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use fvpatch::bench::{emit_csv, run_sweep, write_csv, BenchConfig, SweepGrid, SweepOptions};
use fvpatch::{Layout, Realization, ReductionStrategy, TransferMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReductionChoice {
    On,
    Off,
    Both,
}

/// Sweeps Rusanov patch-kernel configurations and writes timings as CSV.
#[derive(Debug, Parser)]
#[command(name = "fvbench", version)]
struct Args {
    /// Spatial dimensions (2 or 3), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    dim: Vec<usize>,

    /// Volumes per patch and axis, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    patch_size: Vec<usize>,

    /// Patches per launch.
    #[arg(long, conflicts_with = "patches_list")]
    patches: Option<usize>,

    /// Comma-separated list of patch counts.
    #[arg(long, value_delimiter = ',')]
    patches_list: Option<Vec<usize>>,

    /// sequential, patch-wise, batched, task-graph or all.
    #[arg(long, default_value = "batched")]
    realization: String,

    /// aos, soa, aosoa or all.
    #[arg(long, default_value = "aos")]
    layout: String,

    /// shared, copy, pooled or all.
    #[arg(long, default_value = "shared")]
    memory: String,

    #[arg(long, value_enum, default_value = "off")]
    reduction: ReductionChoice,

    /// tree, shared-max, serial or all.
    #[arg(long, default_value = "tree")]
    reduction_strategy: String,

    /// Timed launches per configuration.
    #[arg(long, default_value_t = fvpatch::bench::DEFAULT_SAMPLES)]
    samples: usize,

    /// Worker threads [default: available parallelism].
    #[arg(long)]
    workers: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 1.4)]
    gamma: f64,

    #[arg(long, default_value_t = 1e-3)]
    dt: f64,

    #[arg(long, default_value_t = 0.1)]
    h: f64,

    #[arg(long, default_value_t = fvpatch::executors::DEFAULT_WORKGROUP_LIMIT)]
    workgroup_limit: usize,

    /// Check every configuration against the sequential realization first.
    #[arg(long)]
    verify: bool,

    /// Add a min_total_s column.
    #[arg(long)]
    extended: bool,

    /// CSV destination [default: stdout].
    #[arg(long)]
    output: Option<PathBuf>,
}

fn selection<T: FromStr<Err = fvpatch::Error> + Copy>(
    value: &str,
    all: &[T],
) -> Result<Vec<T>, fvpatch::Error> {
    if value == "all" {
        return Ok(all.to_vec());
    }
    value.split(',').map(|v| v.trim().parse()).collect()
}

fn grid(args: &Args) -> Result<SweepGrid, fvpatch::Error> {
    let workers = match args.workers {
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let base = BenchConfig {
        samples: args.samples,
        gamma: args.gamma,
        dt: args.dt,
        h: args.h,
        seed: args.seed,
        workgroup_limit: args.workgroup_limit,
        workers,
        ..Default::default()
    };
    Ok(SweepGrid {
        base,
        dims: args.dim.clone(),
        patch_sizes: args.patch_size.clone(),
        patch_counts: match (&args.patches_list, args.patches) {
            (Some(list), _) => list.clone(),
            (None, Some(t)) => vec![t],
            (None, None) => vec![1],
        },
        layouts: selection(&args.layout, &Layout::ALL)?,
        realizations: selection(&args.realization, &Realization::ALL)?,
        transfer_modes: selection(&args.memory, &TransferMode::ALL)?,
        reduction_strategies: selection(&args.reduction_strategy, &ReductionStrategy::ALL)?,
        reductions: match args.reduction {
            ReductionChoice::Off => vec![false],
            ReductionChoice::On => vec![true],
            ReductionChoice::Both => vec![false, true],
        },
    })
}

fn run(args: &Args) -> Result<(), fvpatch::Error> {
    let grid = grid(args)?;
    let options = SweepOptions {
        verify: args.verify,
        skip_oversized: args.realization == "all",
    };
    let records = run_sweep(&grid.configs(), options)?;
    match &args.output {
        Some(path) => write_csv(&records, path, args.extended),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit_csv(&records, &mut lock, args.extended).map_err(|source| fvpatch::Error::Csv {
                path: "<stdout>".into(),
                source,
            })?;
            lock.flush().map_err(|source| fvpatch::Error::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fvbench: {e}");
            ExitCode::FAILURE
        }
    }
}
