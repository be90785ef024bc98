//! Staging of patch data for a launch.
//!
//! Patches live in separate heap allocations ([`ScatteredPatchSet`]). A launch
//! either computes on them in place ([`TransferMode::Shared`]) or gathers them
//! into a contiguous batch first, allocating that batch for every launch
//! ([`TransferMode::ExplicitCopy`]) or recycling it ([`TransferMode::Pooled`]).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::executors::{self, ExecOptions, LaunchOutcome, Realization, WorkerPool};
use crate::kernelgraph::{CellRange, KernelPlan};
use crate::microkernels::{FieldBinding, ScratchArrays, TimeStepContext};
use crate::patchdata::{try_zeroed, BatchShape, Enumerator, Layout, PatchBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransferMode {
    Shared,
    ExplicitCopy,
    Pooled,
}

impl TransferMode {
    pub const ALL: [TransferMode; 3] = [
        TransferMode::Shared,
        TransferMode::ExplicitCopy,
        TransferMode::Pooled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransferMode::Shared => "shared",
            TransferMode::ExplicitCopy => "copy",
            TransferMode::Pooled => "pooled",
        }
    }
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown memory mode '{s}'")))
    }
}

/// One AoS input (with halo) and output allocation per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteredPatchSet {
    shape: BatchShape,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl ScatteredPatchSet {
    pub fn new(shape: BatchShape) -> Result<Self> {
        let single = shape.with_patches(1)?;
        Ok(Self {
            shape,
            inputs: (0..shape.patches())
                .map(|_| try_zeroed(single.input_len()))
                .collect::<Result<_>>()?,
            outputs: (0..shape.patches())
                .map(|_| try_zeroed(single.output_len()))
                .collect::<Result<_>>()?,
        })
    }

    pub fn shape(&self) -> BatchShape {
        self.shape
    }

    pub fn input(&self, patch: usize) -> &[f64] {
        &self.inputs[patch]
    }

    pub fn input_mut(&mut self, patch: usize) -> &mut [f64] {
        &mut self.inputs[patch]
    }

    pub fn output(&self, patch: usize) -> &[f64] {
        &self.outputs[patch]
    }

    pub fn output_mut(&mut self, patch: usize) -> &mut [f64] {
        &mut self.outputs[patch]
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    /// Enumerator of one patch's input allocation.
    pub fn input_enumerator(&self) -> Enumerator {
        Enumerator::new(Layout::Aos, self.single(), true)
    }

    pub fn output_enumerator(&self) -> Enumerator {
        Enumerator::new(Layout::Aos, self.single(), false)
    }

    fn single(&self) -> BatchShape {
        self.shape.with_patches(1).expect("non-empty shape")
    }

    pub(crate) fn split_mut(&mut self) -> (&[Vec<f64>], &mut [Vec<f64>]) {
        (&self.inputs, &mut self.outputs)
    }
}

fn check_shapes(set: BatchShape, batch: BatchShape) -> Result<()> {
    if set != batch {
        return Err(Error::ShapeMismatch {
            expected: set.to_string(),
            found: batch.to_string(),
        });
    }
    Ok(())
}

/// Copies every patch's input into the batch, converting to the batch layout.
pub fn gather_patches(src: &ScatteredPatchSet, dst: &mut PatchBatch) -> Result<Duration> {
    check_shapes(src.shape(), dst.shape())?;
    let start = Instant::now();
    let from = src.input_enumerator();
    let to = dst.input_enumerator();
    let n = src.shape().unknowns();
    for (patch, data) in src.inputs.iter().enumerate() {
        if to.layout() == Layout::Aos {
            let len = data.len();
            dst.input[patch * len..(patch + 1) * len].copy_from_slice(data);
            continue;
        }
        for lin in 0..from.volumes_per_patch() {
            for k in 0..n {
                dst.input[to.offset_linear(patch, lin, k)] = data[from.offset_linear(0, lin, k)];
            }
        }
    }
    Ok(start.elapsed())
}

/// Copies the batch output back into the per-patch output allocations.
pub fn scatter_results(src: &PatchBatch, dst: &mut ScatteredPatchSet) -> Result<Duration> {
    check_shapes(dst.shape(), src.shape())?;
    let start = Instant::now();
    let from = src.output_enumerator();
    let to = dst.output_enumerator();
    let n = dst.shape().unknowns();
    for (patch, data) in dst.outputs.iter_mut().enumerate() {
        if from.layout() == Layout::Aos {
            let len = data.len();
            data.copy_from_slice(&src.output[patch * len..(patch + 1) * len]);
            continue;
        }
        for lin in 0..to.volumes_per_patch() {
            for k in 0..n {
                data[to.offset_linear(0, lin, k)] = src.output[from.offset_linear(patch, lin, k)];
            }
        }
    }
    Ok(start.elapsed())
}

/// Buffers handed out for one launch.
#[derive(Debug)]
pub struct LaunchBuffers {
    pub batch: Option<PatchBatch>,
    pub scratch: ScratchArrays,
}

type ArenaKey = (BatchShape, Layout);

/// Emulated device memory with allocation accounting.
#[derive(Debug, Default)]
pub struct DeviceArena {
    batches: HashMap<ArenaKey, PatchBatch>,
    scratch: HashMap<ArenaKey, ScratchArrays>,
    allocation_count: usize,
    live_bytes: usize,
    high_water_bytes: usize,
}

impl DeviceArena {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of buffer allocations performed so far.
    pub fn allocation_count(&self) -> usize {
        self.allocation_count
    }

    pub fn high_water_bytes(&self) -> usize {
        self.high_water_bytes
    }

    fn account(&mut self, buffers: usize, bytes: usize) {
        self.allocation_count += buffers;
        self.live_bytes += bytes;
        self.high_water_bytes = self.high_water_bytes.max(self.live_bytes);
    }

    fn new_batch(&mut self, shape: BatchShape, layout: Layout) -> Result<PatchBatch> {
        let batch = PatchBatch::new(shape, layout)?;
        self.account(2, batch_bytes(&batch));
        Ok(batch)
    }

    fn new_scratch(&mut self, shape: BatchShape, layout: Layout) -> Result<ScratchArrays> {
        let scratch = ScratchArrays::new(shape, layout)?;
        self.account(scratch.buffer_count(), scratch.byte_size());
        Ok(scratch)
    }

    fn pooled_scratch(&mut self, key: ArenaKey) -> Result<ScratchArrays> {
        match self.scratch.remove(&key) {
            Some(s) => Ok(s),
            None => self.new_scratch(key.0, key.1),
        }
    }

    pub fn acquire(
        &mut self,
        shape: BatchShape,
        layout: Layout,
        mode: TransferMode,
    ) -> Result<LaunchBuffers> {
        let key = (shape, layout);
        Ok(match mode {
            TransferMode::Shared => LaunchBuffers {
                batch: None,
                scratch: self.pooled_scratch(key)?,
            },
            TransferMode::ExplicitCopy => LaunchBuffers {
                batch: Some(self.new_batch(shape, layout)?),
                scratch: self.new_scratch(shape, layout)?,
            },
            TransferMode::Pooled => {
                let batch = match self.batches.remove(&key) {
                    Some(b) => b,
                    None => self.new_batch(shape, layout)?,
                };
                LaunchBuffers {
                    batch: Some(batch),
                    scratch: self.pooled_scratch(key)?,
                }
            }
        })
    }

    pub fn release(&mut self, buffers: LaunchBuffers, mode: TransferMode) {
        let key = (buffers.scratch.shape(), buffers.scratch.layout());
        match mode {
            TransferMode::ExplicitCopy => {
                let mut bytes = buffers.scratch.byte_size();
                if let Some(b) = &buffers.batch {
                    bytes += batch_bytes(b);
                }
                self.live_bytes -= bytes;
            }
            TransferMode::Shared | TransferMode::Pooled => {
                if let Some(b) = buffers.batch {
                    self.batches.insert(key, b);
                }
                self.scratch.insert(key, buffers.scratch);
            }
        }
    }
}

fn batch_bytes(batch: &PatchBatch) -> usize {
    (batch.input.len() + batch.output.len()) * std::mem::size_of::<f64>()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LaunchTimings {
    /// Launch to completion, including staging.
    pub total: Duration,
    /// Kernel execution only.
    pub compute: Duration,
    /// Gather plus scatter.
    pub transfer: Duration,
    /// Acquire plus release of buffers.
    pub alloc: Duration,
}

#[derive(Debug, Clone)]
pub struct LaunchReport {
    pub outcome: LaunchOutcome,
    pub timings: LaunchTimings,
}

#[derive(Debug, Clone, Copy)]
pub struct LaunchRequest<'p> {
    pub realization: Realization,
    pub plan: &'p KernelPlan,
    pub layout: Layout,
    pub mode: TransferMode,
    pub ctx: TimeStepContext,
    pub options: ExecOptions,
}

/// One kernel launch on a scattered patch set, staged according to the
/// request's transfer mode. Results land in `patches`' output allocations.
pub fn execute_launch(
    request: &LaunchRequest<'_>,
    patches: &mut ScatteredPatchSet,
    arena: &mut DeviceArena,
    pool: &WorkerPool,
) -> Result<LaunchReport> {
    let shape = request.plan.shape();
    check_shapes(patches.shape(), shape)?;
    let start = Instant::now();

    let t = Instant::now();
    let mut buffers = arena.acquire(shape, request.layout, request.mode)?;
    let mut alloc = t.elapsed();
    let mut transfer = Duration::ZERO;

    let run = |data: FieldBinding<'_>, scratch: &mut ScratchArrays| {
        let t = Instant::now();
        let outcome = executors::run(
            request.realization,
            request.plan,
            data,
            scratch,
            request.ctx,
            pool,
            request.options,
        );
        (outcome, t.elapsed())
    };

    let result = match buffers.batch.as_mut() {
        None => run(FieldBinding::Scattered(patches), &mut buffers.scratch),
        Some(batch) => {
            transfer += gather_patches(patches, batch)?;
            let r = run(FieldBinding::Batch(batch), &mut buffers.scratch);
            if r.0.is_ok() {
                transfer += scatter_results(batch, patches)?;
            }
            r
        }
    };

    let t = Instant::now();
    arena.release(buffers, request.mode);
    alloc += t.elapsed();

    let (outcome, compute) = result;
    Ok(LaunchReport {
        outcome: outcome?,
        timings: LaunchTimings {
            total: start.elapsed(),
            compute,
            transfer,
            alloc,
        },
    })
}

/// Interior of every patch's input, in output order.
pub fn interior_of_inputs(patches: &ScatteredPatchSet) -> Vec<Vec<f64>> {
    let shape = patches.shape();
    let from = patches.input_enumerator();
    let to = patches.output_enumerator();
    (0..shape.patches())
        .map(|patch| {
            let mut out = vec![0.0; to.len()];
            for cell in CellRange::interior(shape).iter() {
                for k in 0..shape.unknowns() {
                    out[to.offset(0, cell, k)] = patches.input(patch)[from.offset(0, cell, k)];
                }
            }
            out
        })
        .collect()
}
