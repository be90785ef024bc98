//! Finite-volume Rusanov kernels over batches of Cartesian patches.
//!
//! One kernel launch takes `T` patches of `p^d` volumes (plus a halo layer of
//! width one) and produces the interior of every patch at the next time step,
//! optionally together with the maximum wave speed of the new solution. The
//! same arithmetic can be scheduled in four ways:
//!
//! * [`Realization::Sequential`]: plain nested loops, the reference result.
//! * [`Realization::PatchWise`]: one parallel region over patches, every patch
//!   walks all steps over a masked union range.
//! * [`Realization::Batched`]: one collapsed parallel loop per step over all
//!   patches, with a global wait after each step.
//! * [`Realization::TaskGraph`]: a dependency graph of `(patch, step)` nodes.
//!
//! All realizations produce bitwise identical outputs, independently of the
//! storage [`Layout`] and the [`TransferMode`] used to stage data.
//!
//! Parallel execution uses rayon behind the default `parallel` feature. With
//! the feature disabled every realization still runs, on the calling thread.

pub mod bench;
pub mod equations;
pub mod error;
pub mod executors;
pub mod kernelgraph;
pub mod memory;
pub mod microkernels;
pub mod patchdata;
mod shared;

pub use equations::{ConservedState, EulerParameters};
pub use error::{Error, Result};
pub use executors::{
    DagAssembly, ExecOptions, ExecutionTrace, LaunchOutcome, Realization, ReductionStrategy,
    WorkerPool,
};
pub use kernelgraph::{KernelPlan, StepKind, StepSpec, TaskGraph};
pub use memory::{DeviceArena, ScatteredPatchSet, TransferMode};
pub use microkernels::{Checking, FieldBinding, ScratchArrays, TimeStepContext};
pub use patchdata::{BatchShape, Cell, Enumerator, Layout, PatchBatch, VolumeIndex};
