//! Kernel realizations.
//!
//! Every realization walks the same plan with the same microkernels; they
//! differ only in how invocations are grouped into parallel regions and where
//! the waits sit. The sequential realization is the reference the others are
//! checked against bit for bit.

mod pool;
mod reduce;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

pub use pool::WorkerPool;
pub use reduce::{reduce_max, tree_max, ReductionStrategy, SharedMax};

use crate::error::{Error, Result};
use crate::kernelgraph::{CellRange, KernelPlan, StepKind};
use crate::microkernels::{FieldBinding, LaunchView, ScratchArrays, TimeStepContext};
use reduce::{reduce_indexed, reduce_local};

/// Default emulated workgroup size limit.
pub const DEFAULT_WORKGROUP_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Realization {
    Sequential,
    PatchWise,
    Batched,
    TaskGraph,
}

impl Realization {
    pub const ALL: [Realization; 4] = [
        Realization::Sequential,
        Realization::PatchWise,
        Realization::Batched,
        Realization::TaskGraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Realization::Sequential => "sequential",
            Realization::PatchWise => "patch-wise",
            Realization::Batched => "batched",
            Realization::TaskGraph => "task-graph",
        }
    }
}

impl fmt::Display for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Realization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown realization '{s}'")))
    }
}

/// How the task-graph realization obtains its graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DagAssembly {
    /// Assembled inside the launch, so its cost is part of the kernel time.
    #[default]
    Dynamic,
    /// Reuse the plan's graph. Not used for benchmark comparisons.
    Prebuilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    pub reduction: ReductionStrategy,
    pub workgroup_limit: usize,
    pub dag_assembly: DagAssembly,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            reduction: ReductionStrategy::default(),
            workgroup_limit: DEFAULT_WORKGROUP_LIMIT,
            dag_assembly: DagAssembly::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    /// Waits that cover every patch.
    pub global_sync_count: usize,
    /// Parallel regions (or graph nodes) submitted.
    pub launch_count: usize,
    /// Executed invocations per step, summed over patches, in plan order.
    pub per_step_task_counts: Vec<(StepKind, usize)>,
    pub executed_invocation_count: usize,
    /// Lanes of the union range that were masked out (patch-wise only).
    pub masked_invocation_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaunchOutcome {
    /// Maximum wave speed of the new solution, if the plan reduces.
    pub reduced_eigenvalue: Option<f64>,
    pub trace: ExecutionTrace,
    /// Most graph nodes seen running at once (task-graph only, else 0).
    /// Depends on scheduling, unlike the trace counters.
    pub peak_concurrency: usize,
}

/// Runs one kernel launch.
pub fn run(
    realization: Realization,
    plan: &KernelPlan,
    data: FieldBinding<'_>,
    scratch: &mut ScratchArrays,
    ctx: TimeStepContext,
    pool: &WorkerPool,
    options: ExecOptions,
) -> Result<LaunchOutcome> {
    if data.shape() != plan.shape() {
        return Err(Error::ShapeMismatch {
            expected: plan.shape().to_string(),
            found: data.shape().to_string(),
        });
    }
    let view = LaunchView::new(data, scratch, ctx)?;
    match realization {
        Realization::Sequential => run_sequential(plan, &view),
        Realization::PatchWise => run_patch_wise(plan, &view, pool, options),
        Realization::Batched => run_batched(plan, &view, pool, options),
        Realization::TaskGraph => run_task_graph(plan, &view, pool, options),
    }
}

fn run_sequential(plan: &KernelPlan, view: &LaunchView<'_>) -> Result<LaunchOutcome> {
    let patches = plan.shape().patches();
    let mut trace = ExecutionTrace::default();
    let mut reduced = None;
    for step in plan.steps() {
        if step.kind == StepKind::ReduceMaxEigenvalue {
            let mut max = 0.0f64;
            for patch in 0..patches {
                for cell in step.range.iter() {
                    // SAFETY: single thread.
                    max = max.max(unsafe { view.reduce_value(patch, cell)? });
                }
            }
            reduced = Some(max);
        } else {
            for patch in 0..patches {
                for cell in step.range.iter() {
                    unsafe { view.invoke(step.kind, patch, cell)? };
                }
            }
        }
        trace
            .per_step_task_counts
            .push((step.kind, patches * step.range.len()));
    }
    trace.executed_invocation_count = trace.per_step_task_counts.iter().map(|c| c.1).sum();
    Ok(LaunchOutcome {
        reduced_eigenvalue: reduced,
        trace,
        peak_concurrency: 0,
    })
}

fn run_batched(
    plan: &KernelPlan,
    view: &LaunchView<'_>,
    pool: &WorkerPool,
    options: ExecOptions,
) -> Result<LaunchOutcome> {
    let patches = plan.shape().patches();
    let mut trace = ExecutionTrace::default();
    let mut reduced = None;
    for step in plan.steps() {
        let lanes = step.range.len();
        let total = patches * lanes;
        let locate = |i: usize| (i / lanes, step.range.cell_at(i % lanes));
        // SAFETY: within one step every flat index writes only the entries of
        // its own (patch, cell); reads of earlier steps' results are ordered by
        // the wait at the end of the previous parallel region.
        if step.kind == StepKind::ReduceMaxEigenvalue {
            let max = reduce_indexed(pool, total, options.reduction, |i| {
                let (patch, cell) = locate(i);
                unsafe { view.reduce_value(patch, cell) }
            })?;
            reduced = Some(max);
        } else {
            pool.map_chunks(total, |range| {
                for i in range {
                    let (patch, cell) = locate(i);
                    unsafe { view.invoke(step.kind, patch, cell)? };
                }
                Ok(())
            })?;
        }
        trace.launch_count += 1;
        trace.global_sync_count += 1;
        trace.per_step_task_counts.push((step.kind, total));
    }
    trace.executed_invocation_count = trace.per_step_task_counts.iter().map(|c| c.1).sum();
    Ok(LaunchOutcome {
        reduced_eigenvalue: reduced,
        trace,
        peak_concurrency: 0,
    })
}

struct PatchRun {
    executed: Vec<usize>,
    masked: usize,
    max: f64,
}

fn run_patch_wise(
    plan: &KernelPlan,
    view: &LaunchView<'_>,
    pool: &WorkerPool,
    options: ExecOptions,
) -> Result<LaunchOutcome> {
    let shape = plan.shape();
    let union = CellRange::haloed(shape);
    if union.len() > options.workgroup_limit {
        return Err(Error::WorkgroupLimitExceeded {
            required: union.len(),
            limit: options.workgroup_limit,
        });
    }
    let steps = plan.steps();
    // One work item per patch. Steps of a patch run in order on its worker,
    // which plays the role of the workgroup barrier between steps.
    let runs = pool.map_each(shape.patches(), |patch| {
        let mut run = PatchRun {
            executed: vec![0; steps.len()],
            masked: 0,
            max: 0.0,
        };
        for (s, step) in steps.iter().enumerate() {
            let active = |lane: usize| {
                let cell = union.cell_at(lane);
                step.range.contains(cell).then_some(cell)
            };
            if step.kind == StepKind::ReduceMaxEigenvalue {
                run.max =
                    reduce_local(union.len(), options.reduction, |lane| match active(lane) {
                        // SAFETY: only this worker touches this patch's entries.
                        Some(cell) => unsafe { view.reduce_value(patch, cell) },
                        None => Ok(0.0),
                    })?;
                run.executed[s] = step.range.len();
                run.masked += union.len() - step.range.len();
            } else {
                for lane in 0..union.len() {
                    match active(lane) {
                        Some(cell) => {
                            unsafe { view.invoke(step.kind, patch, cell)? };
                            run.executed[s] += 1;
                        }
                        None => run.masked += 1,
                    }
                }
            }
        }
        Ok(run)
    })?;

    let mut trace = ExecutionTrace {
        global_sync_count: 1,
        launch_count: 1,
        ..Default::default()
    };
    for (s, step) in steps.iter().enumerate() {
        let count = runs.iter().map(|r| r.executed[s]).sum();
        trace.per_step_task_counts.push((step.kind, count));
    }
    trace.executed_invocation_count = trace.per_step_task_counts.iter().map(|c| c.1).sum();
    trace.masked_invocation_count = runs.iter().map(|r| r.masked).sum();
    let reduced = plan
        .with_reduction()
        .then(|| combine_patch_maxima(runs.iter().map(|r| r.max), options.reduction));
    Ok(LaunchOutcome {
        reduced_eigenvalue: reduced,
        trace,
        peak_concurrency: 0,
    })
}

fn run_task_graph(
    plan: &KernelPlan,
    view: &LaunchView<'_>,
    pool: &WorkerPool,
    options: ExecOptions,
) -> Result<LaunchOutcome> {
    let shape = plan.shape();
    let graph = plan.graph(options.dag_assembly == DagAssembly::Dynamic);
    let steps = plan.steps();
    let executed: Vec<AtomicUsize> = steps.iter().map(|_| AtomicUsize::new(0)).collect();
    let patch_max: Vec<SharedMax> = (0..shape.patches()).map(|_| SharedMax::new()).collect();

    // SAFETY: nodes without a path between them touch disjoint entries (other
    // patch, or other per-axis temporaries); every read-after-write and
    // write-after-write on shared entries is an edge of the graph.
    let peak = pool.run_graph(&graph, |node| {
        let n = graph.nodes()[node];
        let step = &steps[n.step];
        if step.kind == StepKind::ReduceMaxEigenvalue {
            let max = reduce_local(step.range.len(), options.reduction, |i| unsafe {
                view.reduce_value(n.patch, step.range.cell_at(i))
            })?;
            patch_max[n.patch].update(max);
        } else {
            for cell in step.range.iter() {
                unsafe { view.invoke(step.kind, n.patch, cell)? };
            }
        }
        executed[n.step].fetch_add(step.range.len(), Ordering::Relaxed);
        Ok(())
    })?;

    let mut trace = ExecutionTrace {
        global_sync_count: 1,
        launch_count: graph.node_count(),
        ..Default::default()
    };
    for (step, count) in steps.iter().zip(executed) {
        trace
            .per_step_task_counts
            .push((step.kind, count.into_inner()));
    }
    trace.executed_invocation_count = trace.per_step_task_counts.iter().map(|c| c.1).sum();
    let reduced = plan
        .with_reduction()
        .then(|| combine_patch_maxima(patch_max.iter().map(SharedMax::get), options.reduction));
    Ok(LaunchOutcome {
        reduced_eigenvalue: reduced,
        trace,
        peak_concurrency: peak,
    })
}

fn combine_patch_maxima(values: impl Iterator<Item = f64>, strategy: ReductionStrategy) -> f64 {
    let values: Vec<f64> = values.collect();
    reduce_local(values.len(), strategy, |i| Ok(values[i])).expect("infallible")
}
