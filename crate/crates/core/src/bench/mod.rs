//! Benchmark sweeps.
//!
//! A sweep expands a [`SweepGrid`] into configurations, runs each one on a
//! seeded field and averages the timings of `samples` launches into a
//! [`BenchRecord`]. Records are written with [`write_csv`].

mod field;
mod report;

use std::collections::HashMap;
use std::fmt;
use std::time::Duration;

pub use field::{init_field, Lcg, LCG_INCREMENT, LCG_MULTIPLIER};
pub use report::{emit_csv, format_float, write_csv, CSV_HEADER, EXTENDED_COLUMN};

use crate::equations::EulerParameters;
use crate::error::{Error, Result};
use crate::executors::{
    ExecOptions, Realization, ReductionStrategy, WorkerPool, DEFAULT_WORKGROUP_LIMIT,
};
use crate::kernelgraph::KernelPlan;
use crate::memory::{
    execute_launch, DeviceArena, LaunchRequest, LaunchTimings, ScatteredPatchSet, TransferMode,
};
use crate::microkernels::TimeStepContext;
use crate::patchdata::{BatchShape, Layout};

pub const DEFAULT_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub dim: usize,
    pub patch_size: usize,
    pub patches: usize,
    pub layout: Layout,
    pub realization: Realization,
    pub transfer_mode: TransferMode,
    pub reduction_strategy: ReductionStrategy,
    pub with_reduction: bool,
    pub samples: usize,
    pub gamma: f64,
    pub dt: f64,
    pub h: f64,
    pub seed: u64,
    pub workgroup_limit: usize,
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            patch_size: 4,
            patches: 1,
            layout: Layout::Aos,
            realization: Realization::Batched,
            transfer_mode: TransferMode::Shared,
            reduction_strategy: ReductionStrategy::GroupTree,
            with_reduction: false,
            samples: DEFAULT_SAMPLES,
            gamma: 1.4,
            dt: 1e-3,
            h: 0.1,
            seed: 0,
            workgroup_limit: DEFAULT_WORKGROUP_LIMIT,
            workers: 1,
        }
    }
}

type ConfigKey = (
    usize,
    usize,
    usize,
    Layout,
    Realization,
    TransferMode,
    ReductionStrategy,
    bool,
    usize,
    usize,
);

impl BenchConfig {
    pub fn shape(&self) -> Result<BatchShape> {
        BatchShape::new(self.dim, self.patch_size, self.patches)
    }

    pub fn params(&self) -> Result<EulerParameters> {
        EulerParameters::new(self.gamma)
    }

    pub fn context(&self) -> Result<TimeStepContext> {
        TimeStepContext::new(self.dt, self.h, self.params()?)
    }

    pub fn exec_options(&self) -> ExecOptions {
        ExecOptions {
            reduction: self.reduction_strategy,
            workgroup_limit: self.workgroup_limit,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        self.context()?;
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether the patch-wise workgroup for this shape fits the limit.
    pub fn fits_workgroup(&self) -> bool {
        self.realization != Realization::PatchWise
            || (self.patch_size + 2).pow(self.dim as u32) <= self.workgroup_limit
    }

    /// Row order of a sweep.
    fn key(&self) -> ConfigKey {
        (
            self.dim,
            self.patch_size,
            self.patches,
            self.layout,
            self.realization,
            self.transfer_mode,
            self.reduction_strategy,
            self.with_reduction,
            self.samples,
            self.workers,
        )
    }
}

impl fmt::Display for BenchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "d={} p={} T={} {} {} {} {} reduction={}",
            self.dim,
            self.patch_size,
            self.patches,
            self.layout,
            self.realization,
            self.transfer_mode,
            self.reduction_strategy,
            self.with_reduction
        )
    }
}

/// Cartesian product of configuration axes over a common base.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub base: BenchConfig,
    pub dims: Vec<usize>,
    pub patch_sizes: Vec<usize>,
    pub patch_counts: Vec<usize>,
    pub layouts: Vec<Layout>,
    pub realizations: Vec<Realization>,
    pub transfer_modes: Vec<TransferMode>,
    pub reduction_strategies: Vec<ReductionStrategy>,
    pub reductions: Vec<bool>,
}

impl SweepGrid {
    /// A grid holding only `base`.
    pub fn single(base: BenchConfig) -> Self {
        Self {
            base,
            dims: vec![base.dim],
            patch_sizes: vec![base.patch_size],
            patch_counts: vec![base.patches],
            layouts: vec![base.layout],
            realizations: vec![base.realization],
            transfer_modes: vec![base.transfer_mode],
            reduction_strategies: vec![base.reduction_strategy],
            reductions: vec![base.with_reduction],
        }
    }

    /// All configurations, sorted in row order.
    pub fn configs(&self) -> Vec<BenchConfig> {
        let mut out = Vec::new();
        for &dim in &self.dims {
            for &patch_size in &self.patch_sizes {
                for &patches in &self.patch_counts {
                    for &layout in &self.layouts {
                        for &realization in &self.realizations {
                            for &transfer_mode in &self.transfer_modes {
                                for &reduction_strategy in &self.reduction_strategies {
                                    for &with_reduction in &self.reductions {
                                        out.push(BenchConfig {
                                            dim,
                                            patch_size,
                                            patches,
                                            layout,
                                            realization,
                                            transfer_mode,
                                            reduction_strategy,
                                            with_reduction,
                                            ..self.base
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out.sort_by_key(BenchConfig::key);
        out.dedup_by_key(|c| c.key());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub config: BenchConfig,
    pub mean_total_s: f64,
    pub mean_compute_s: f64,
    pub mean_transfer_s: f64,
    pub mean_alloc_s: f64,
    pub min_total_s: f64,
    pub time_per_volume_update_s: f64,
    pub time_per_unknown_update_s: f64,
    pub reduced_eigenvalue: Option<f64>,
}

impl BenchRecord {
    pub fn from_samples(
        config: BenchConfig,
        samples: &[LaunchTimings],
        reduced_eigenvalue: Option<f64>,
    ) -> Self {
        let mean = |f: fn(&LaunchTimings) -> Duration| {
            samples.iter().map(|t| f(t).as_secs_f64()).sum::<f64>() / samples.len() as f64
        };
        let mean_total_s = mean(|t| t.total);
        let volumes = (config.patches * config.patch_size.pow(config.dim as u32)) as f64;
        let unknowns = (config.dim + 2) as f64;
        Self {
            config,
            mean_total_s,
            mean_compute_s: mean(|t| t.compute),
            mean_transfer_s: mean(|t| t.transfer),
            mean_alloc_s: mean(|t| t.alloc),
            min_total_s: samples
                .iter()
                .map(|t| t.total.as_secs_f64())
                .fold(f64::INFINITY, f64::min),
            time_per_volume_update_s: mean_total_s / volumes,
            time_per_unknown_update_s: mean_total_s / (volumes * unknowns),
            reduced_eigenvalue,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Check every configuration against the sequential realization before timing.
    pub verify: bool,
    /// Skip patch-wise configurations whose workgroup exceeds the limit
    /// instead of failing.
    pub skip_oversized: bool,
}

/// Runs one launch of `config` on a copy of `field` and returns the outputs.
fn single_launch(
    config: &BenchConfig,
    realization: Realization,
    plan: &KernelPlan,
    field: &ScatteredPatchSet,
    pool: &WorkerPool,
) -> Result<(ScatteredPatchSet, Option<f64>)> {
    let mut patches = field.clone();
    let request = LaunchRequest {
        realization,
        plan,
        layout: config.layout,
        mode: config.transfer_mode,
        ctx: config.context()?,
        options: config.exec_options(),
    };
    let report = execute_launch(&request, &mut patches, &mut DeviceArena::new(), pool)?;
    Ok((patches, report.outcome.reduced_eigenvalue))
}

/// Compares `config` against the sequential realization on the same field.
pub fn verify_config(
    config: &BenchConfig,
    plan: &KernelPlan,
    field: &ScatteredPatchSet,
    pool: &WorkerPool,
) -> Result<()> {
    let (expected, expected_lambda) =
        single_launch(config, Realization::Sequential, plan, field, pool)?;
    let (actual, actual_lambda) = single_launch(config, config.realization, plan, field, pool)?;
    let mismatch = |location: String, expected: f64, actual: f64| Error::VerifyMismatch {
        config: config.to_string(),
        location,
        expected,
        actual,
    };
    let enumerator = field.output_enumerator();
    let n = field.shape().unknowns();
    for patch in 0..field.shape().patches() {
        let (e, a) = (expected.output(patch), actual.output(patch));
        if let Some(i) = (0..e.len()).find(|&i| e[i].to_bits() != a[i].to_bits()) {
            let lin = i / n;
            let cell = crate::kernelgraph::CellRange::interior(field.shape()).cell_at(lin);
            debug_assert_eq!(enumerator.offset(0, cell, i % n), i);
            let location = format!(
                "patch {patch} cell {:?} unknown {}",
                &cell[..field.shape().dim()],
                i % n
            );
            return Err(mismatch(location, e[i], a[i]));
        }
    }
    if expected_lambda.map(f64::to_bits) != actual_lambda.map(f64::to_bits) {
        return Err(mismatch(
            "reduced eigenvalue".into(),
            expected_lambda.unwrap_or(f64::NAN),
            actual_lambda.unwrap_or(f64::NAN),
        ));
    }
    Ok(())
}

/// Benchmarks one configuration: one warm-up launch, then `samples` timed ones.
pub fn run_config(
    config: &BenchConfig,
    pool: &WorkerPool,
    options: SweepOptions,
) -> Result<BenchRecord> {
    config.validate()?;
    let shape = config.shape()?;
    let field = init_field(shape, config.seed, config.params()?)?;
    let plan = KernelPlan::new(shape, config.with_reduction);
    if options.verify {
        verify_config(config, &plan, &field, pool)?;
    }
    let mut patches = field;
    let mut arena = DeviceArena::new();
    let request = LaunchRequest {
        realization: config.realization,
        plan: &plan,
        layout: config.layout,
        mode: config.transfer_mode,
        ctx: config.context()?,
        options: config.exec_options(),
    };
    execute_launch(&request, &mut patches, &mut arena, pool)?;
    let mut timings = Vec::with_capacity(config.samples);
    let mut reduced = None;
    for _ in 0..config.samples {
        let report = execute_launch(&request, &mut patches, &mut arena, pool)?;
        timings.push(report.timings);
        reduced = report.outcome.reduced_eigenvalue;
    }
    Ok(BenchRecord::from_samples(*config, &timings, reduced))
}

/// Runs every configuration, in row order.
pub fn run_sweep(configs: &[BenchConfig], options: SweepOptions) -> Result<Vec<BenchRecord>> {
    let mut configs = configs.to_vec();
    configs.sort_by_key(BenchConfig::key);
    let mut pools: HashMap<usize, WorkerPool> = HashMap::new();
    let mut records = Vec::with_capacity(configs.len());
    for config in &configs {
        if options.skip_oversized && !config.fits_workgroup() {
            log::warn!(
                "skipping {config}: patch does not fit a workgroup of {}",
                config.workgroup_limit
            );
            continue;
        }
        config.validate()?;
        let pool = match pools.entry(config.workers) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(WorkerPool::new(config.workers)?)
            }
        };
        log::info!("running {config}");
        records.push(run_config(config, pool, options)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchConfig {
        BenchConfig {
            samples: 2,
            patches: 2,
            workers: 2,
            ..Default::default()
        }
    }

    #[test]
    fn grid_is_sorted_and_complete() {
        let grid = SweepGrid {
            patch_sizes: vec![8, 4, 6],
            patch_counts: vec![4, 1, 2],
            reductions: vec![true, false],
            ..SweepGrid::single(tiny())
        };
        let configs = grid.configs();
        assert_eq!(configs.len(), 18);
        assert!(configs.windows(2).all(|w| w[0].key() < w[1].key()));
        assert_eq!(
            (
                configs[0].patch_size,
                configs[0].patches,
                configs[0].with_reduction
            ),
            (4, 1, false)
        );
    }

    #[test]
    fn normalized_columns() {
        let t = |ms: u64| LaunchTimings {
            total: Duration::from_millis(ms),
            compute: Duration::from_millis(ms / 2),
            ..Default::default()
        };
        let config = BenchConfig {
            dim: 3,
            patch_size: 4,
            patches: 2,
            ..tiny()
        };
        let r = BenchRecord::from_samples(config, &[t(10), t(30)], Some(1.5));
        assert_eq!(r.mean_total_s, (0.01 + 0.03) / 2.0);
        assert_eq!(r.min_total_s, 0.01);
        assert_eq!(r.time_per_volume_update_s, r.mean_total_s / 128.0);
        assert_eq!(r.time_per_unknown_update_s, r.mean_total_s / 640.0);
    }

    #[test]
    fn sweep_runs_and_verifies() {
        let grid = SweepGrid {
            realizations: Realization::ALL.to_vec(),
            transfer_modes: TransferMode::ALL.to_vec(),
            reductions: vec![false, true],
            ..SweepGrid::single(tiny())
        };
        let records = run_sweep(
            &grid.configs(),
            SweepOptions {
                verify: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(records.len(), 24);
        for r in &records {
            assert_eq!(r.reduced_eigenvalue.is_some(), r.config.with_reduction);
            assert!(r.mean_compute_s <= r.mean_total_s);
            if r.config.transfer_mode == TransferMode::Shared {
                assert_eq!(r.mean_transfer_s, 0.0);
            }
        }
    }

    #[test]
    fn oversized_patch_wise_is_skipped_or_fails() {
        let config = BenchConfig {
            dim: 3,
            patch_size: 12,
            realization: Realization::PatchWise,
            samples: 1,
            ..Default::default()
        };
        assert!(!config.fits_workgroup());
        let skipped = run_sweep(
            &[config],
            SweepOptions {
                skip_oversized: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(skipped.is_empty());
        assert!(matches!(
            run_sweep(&[config], SweepOptions::default()),
            Err(Error::WorkgroupLimitExceeded { .. })
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            BenchConfig {
                samples: 0,
                ..tiny()
            },
            BenchConfig {
                workers: 0,
                ..tiny()
            },
            BenchConfig {
                gamma: 1.0,
                ..tiny()
            },
            BenchConfig { dt: -1.0, ..tiny() },
            BenchConfig { dim: 4, ..tiny() },
        ] {
            assert!(
                run_sweep(&[bad], SweepOptions::default()).is_err(),
                "{bad:?}"
            );
        }
    }
}
