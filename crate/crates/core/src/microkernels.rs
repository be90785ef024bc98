//! Per-volume compute bodies.
//!
//! Each microkernel handles one volume of one patch for one step and reaches
//! its data exclusively through enumerators, so the same body serves every
//! layout and both contiguous batches and scattered per-patch allocations.

use crate::equations::{self, EulerParameters, MAX_UNKNOWNS};
use crate::error::{Error, Result};
use crate::kernelgraph::{iteration_range, StepKind};
use crate::memory::ScatteredPatchSet;
use crate::patchdata::{try_zeroed, BatchShape, Cell, Enumerator, Layout, PatchBatch, VolumeIndex};
use crate::shared::SharedSlice;

/// Whether microkernels validate admissibility of the states they touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Checking {
    /// Reject unphysical states with [`Error::InvalidState`].
    Verify,
    /// Assume admissible data, no extra branches.
    #[default]
    Unchecked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepContext {
    pub dt: f64,
    pub h: f64,
    pub params: EulerParameters,
    pub checking: Checking,
}

impl TimeStepContext {
    pub fn new(dt: f64, h: f64, params: EulerParameters) -> Result<Self> {
        for (name, v) in [("time step", dt), ("volume size", h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            dt,
            h,
            params,
            checking: Checking::Unchecked,
        })
    }

    pub fn checked(self) -> Self {
        Self {
            checking: Checking::Verify,
            ..self
        }
    }
}

/// Per-axis flux and wave-speed temporaries, sized for the haloed batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScratchArrays {
    shape: BatchShape,
    layout: Layout,
    pub tmp_flux: Vec<Vec<f64>>,
    pub tmp_lambda: Vec<Vec<f64>>,
}

impl ScratchArrays {
    pub fn new(shape: BatchShape, layout: Layout) -> Result<Self> {
        let d = shape.dim();
        let flux_len = shape.unknowns() * shape.patches() * shape.haloed_volumes();
        let lambda_len = shape.patches() * shape.haloed_volumes();
        Ok(Self {
            shape,
            layout,
            tmp_flux: (0..d)
                .map(|_| try_zeroed(flux_len))
                .collect::<Result<_>>()?,
            tmp_lambda: (0..d)
                .map(|_| try_zeroed(lambda_len))
                .collect::<Result<_>>()?,
        })
    }

    pub fn shape(&self) -> BatchShape {
        self.shape
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Number of separately allocated arrays.
    pub fn buffer_count(&self) -> usize {
        self.tmp_flux.len() + self.tmp_lambda.len()
    }

    pub fn byte_size(&self) -> usize {
        let entries: usize = self
            .tmp_flux
            .iter()
            .chain(&self.tmp_lambda)
            .map(Vec::len)
            .sum();
        entries * std::mem::size_of::<f64>()
    }

    pub fn flux_enumerator(&self) -> Enumerator {
        Enumerator::new(self.layout, self.shape, true)
    }

    pub fn lambda_enumerator(&self) -> Enumerator {
        Enumerator::with_unknowns(Layout::Aos, self.shape, true, 1)
    }

    pub fn flux_at(&self, axis: usize, v: VolumeIndex, unknown: usize) -> Result<f64> {
        Ok(self.tmp_flux[axis][self.flux_enumerator().checked_offset(v, unknown)?])
    }

    pub fn lambda_at(&self, axis: usize, v: VolumeIndex) -> Result<f64> {
        Ok(self.tmp_lambda[axis][self.lambda_enumerator().checked_offset(v, 0)?])
    }
}

/// Where a launch reads `Q` and writes `Q^(new)`.
#[derive(Debug)]
pub enum FieldBinding<'a> {
    /// A contiguous batch in any layout.
    Batch(&'a mut PatchBatch),
    /// Per-patch AoS allocations addressed through a patch table.
    Scattered(&'a mut ScatteredPatchSet),
}

impl FieldBinding<'_> {
    pub fn shape(&self) -> BatchShape {
        match self {
            FieldBinding::Batch(b) => b.shape(),
            FieldBinding::Scattered(s) => s.shape(),
        }
    }
}

enum InputField<'a> {
    Batch(&'a [f64]),
    Scattered(Vec<&'a [f64]>),
}

enum OutputField<'a> {
    Batch(SharedSlice<'a>),
    Scattered(Vec<SharedSlice<'a>>),
}

/// Everything a microkernel touches during one launch.
///
/// Methods are `unsafe`: callers guarantee that concurrent invocations write
/// disjoint entries and that every read of an entry written during the launch
/// is ordered after that write. The executors derive this from the plan.
pub(crate) struct LaunchView<'a> {
    shape: BatchShape,
    unknowns: usize,
    input: InputField<'a>,
    input_enum: Enumerator,
    output: OutputField<'a>,
    output_enum: Enumerator,
    tmp_flux: Vec<SharedSlice<'a>>,
    flux_enum: Enumerator,
    tmp_lambda: Vec<SharedSlice<'a>>,
    lambda_enum: Enumerator,
    ctx: TimeStepContext,
}

impl<'a> LaunchView<'a> {
    pub fn new(
        data: FieldBinding<'a>,
        scratch: &'a mut ScratchArrays,
        ctx: TimeStepContext,
    ) -> Result<Self> {
        let shape = data.shape();
        if scratch.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_string(),
                found: format!("scratch for {}", scratch.shape()),
            });
        }
        let (input, input_enum, output, output_enum) = match data {
            FieldBinding::Batch(batch) => {
                let input_enum = batch.input_enumerator();
                let output_enum = batch.output_enumerator();
                (
                    InputField::Batch(&batch.input[..]),
                    input_enum,
                    OutputField::Batch(SharedSlice::new(&mut batch.output[..])),
                    output_enum,
                )
            }
            FieldBinding::Scattered(set) => {
                let single = shape.with_patches(1)?;
                let (inputs, outputs) = set.split_mut();
                (
                    InputField::Scattered(inputs.iter().map(Vec::as_slice).collect()),
                    Enumerator::new(Layout::Aos, single, true),
                    OutputField::Scattered(
                        outputs.iter_mut().map(|o| SharedSlice::new(o)).collect(),
                    ),
                    Enumerator::new(Layout::Aos, single, false),
                )
            }
        };
        let flux_enum = scratch.flux_enumerator();
        let lambda_enum = scratch.lambda_enumerator();
        Ok(Self {
            shape,
            unknowns: shape.unknowns(),
            input,
            input_enum,
            output,
            output_enum,
            tmp_flux: scratch
                .tmp_flux
                .iter_mut()
                .map(|a| SharedSlice::new(a))
                .collect(),
            flux_enum,
            tmp_lambda: scratch
                .tmp_lambda
                .iter_mut()
                .map(|a| SharedSlice::new(a))
                .collect(),
            lambda_enum,
            ctx,
        })
    }

    pub fn shape(&self) -> BatchShape {
        self.shape
    }

    #[inline]
    fn load_input(&self, patch: usize, cell: Cell) -> [f64; MAX_UNKNOWNS] {
        let mut q = [0.0; MAX_UNKNOWNS];
        let lin = self.input_enum.linear_cell(cell);
        match &self.input {
            InputField::Batch(data) => {
                for (k, v) in q.iter_mut().enumerate().take(self.unknowns) {
                    *v = data[self.input_enum.offset_linear(patch, lin, k)];
                }
            }
            InputField::Scattered(patches) => {
                let data = patches[patch];
                for (k, v) in q.iter_mut().enumerate().take(self.unknowns) {
                    *v = data[self.input_enum.offset_linear(0, lin, k)];
                }
            }
        }
        q
    }

    #[inline]
    fn output_slot(&self, patch: usize, cell: Cell) -> (SharedSlice<'a>, usize, usize) {
        // (array, cell position, patch index within that array)
        match &self.output {
            OutputField::Batch(data) => (*data, self.output_enum.linear_cell(cell), patch),
            OutputField::Scattered(patches) => {
                (patches[patch], self.output_enum.linear_cell(cell), 0)
            }
        }
    }

    #[inline]
    fn check(&self, q: &[f64]) -> Result<()> {
        if self.ctx.checking == Checking::Verify {
            equations::check_admissible(q, self.ctx.params)?;
        }
        Ok(())
    }

    pub unsafe fn copy(&self, patch: usize, cell: Cell) {
        let q = self.load_input(patch, cell);
        let (out, lin, p) = self.output_slot(patch, cell);
        for (k, &v) in q.iter().enumerate().take(self.unknowns) {
            out.write(self.output_enum.offset_linear(p, lin, k), v);
        }
    }

    pub unsafe fn flux(&self, patch: usize, cell: Cell, axis: usize) -> Result<()> {
        let n = self.unknowns;
        let q = self.load_input(patch, cell);
        self.check(&q[..n])?;
        let mut f = [0.0; MAX_UNKNOWNS];
        equations::flux_into(&q[..n], axis, self.ctx.params, &mut f);
        let lin = self.flux_enum.linear_cell(cell);
        let dst = self.tmp_flux[axis];
        for (k, &v) in f.iter().enumerate().take(n) {
            dst.write(self.flux_enum.offset_linear(patch, lin, k), v);
        }
        Ok(())
    }

    pub unsafe fn eigenvalue(&self, patch: usize, cell: Cell, axis: usize) -> Result<()> {
        let q = self.load_input(patch, cell);
        self.check(&q[..self.unknowns])?;
        let lambda =
            equations::max_eigenvalue_unchecked(&q[..self.unknowns], axis, self.ctx.params);
        self.tmp_lambda[axis].write(self.lambda_enum.offset(patch, cell, 0), lambda);
        Ok(())
    }

    /// Adds `(dt/h)(F_left - F_right)` of the Rusanov face fluxes along `axis`.
    pub unsafe fn accumulate(&self, patch: usize, cell: Cell, axis: usize) {
        let n = self.unknowns;
        let mut left = cell;
        left[axis] -= 1;
        let mut right = cell;
        right[axis] += 1;

        let q_left = self.load_input(patch, left);
        let q_centre = self.load_input(patch, cell);
        let q_right = self.load_input(patch, right);

        let lambdas = self.tmp_lambda[axis];
        let lambda_of = |c: Cell| lambdas.read(self.lambda_enum.offset(patch, c, 0));
        let lambda_centre = lambda_of(cell);
        let lambda_left = lambda_of(left).max(lambda_centre);
        let lambda_right = lambda_centre.max(lambda_of(right));

        let fluxes = self.tmp_flux[axis];
        let (lin_l, lin_c, lin_r) = (
            self.flux_enum.linear_cell(left),
            self.flux_enum.linear_cell(cell),
            self.flux_enum.linear_cell(right),
        );
        let scale = self.ctx.dt / self.ctx.h;
        let (out, lin_out, p) = self.output_slot(patch, cell);
        for k in 0..n {
            let f_l = fluxes.read(self.flux_enum.offset_linear(patch, lin_l, k));
            let f_c = fluxes.read(self.flux_enum.offset_linear(patch, lin_c, k));
            let f_r = fluxes.read(self.flux_enum.offset_linear(patch, lin_r, k));
            let face_left = rusanov_face_flux(f_l, f_c, q_left[k], q_centre[k], lambda_left);
            let face_right = rusanov_face_flux(f_c, f_r, q_centre[k], q_right[k], lambda_right);
            out.add(
                self.output_enum.offset_linear(p, lin_out, k),
                scale * (face_left - face_right),
            );
        }
    }

    /// Largest directional wave speed of the updated state in `cell`.
    pub unsafe fn reduce_value(&self, patch: usize, cell: Cell) -> Result<f64> {
        let n = self.unknowns;
        let (out, lin, p) = self.output_slot(patch, cell);
        let mut q = [0.0; MAX_UNKNOWNS];
        for (k, v) in q.iter_mut().enumerate().take(n) {
            *v = out.read(self.output_enum.offset_linear(p, lin, k));
        }
        self.check(&q[..n])?;
        Ok((0..self.shape.dim())
            .map(|axis| equations::max_eigenvalue_unchecked(&q[..n], axis, self.ctx.params))
            .fold(0.0, f64::max))
    }

    /// Runs a non-reduction step for one volume.
    #[inline]
    pub unsafe fn invoke(&self, kind: StepKind, patch: usize, cell: Cell) -> Result<()> {
        match kind {
            StepKind::CopyInterior => self.copy(patch, cell),
            StepKind::FluxAlongAxis(n) => self.flux(patch, cell, n)?,
            StepKind::EigenvalueAlongAxis(n) => self.eigenvalue(patch, cell, n)?,
            StepKind::AccumulateAlongAxis(n) => self.accumulate(patch, cell, n),
            StepKind::ReduceMaxEigenvalue => {
                self.reduce_value(patch, cell)?;
            }
        }
        Ok(())
    }
}

/// `½(F⁻ + F⁺) − ½ λ (Q⁺ − Q⁻)` for one unknown.
#[inline]
pub fn rusanov_face_flux(
    flux_minus: f64,
    flux_plus: f64,
    q_minus: f64,
    q_plus: f64,
    lambda: f64,
) -> f64 {
    0.5 * (flux_minus + flux_plus) - 0.5 * lambda * (q_plus - q_minus)
}

/// Single-threaded, bounds-checked access to the microkernels.
///
/// Holding exclusive borrows of the data makes every call safe; executors use
/// the same bodies concurrently under the plan's disjoint-write discipline.
pub struct Microkernels<'a> {
    view: LaunchView<'a>,
}

impl<'a> Microkernels<'a> {
    pub fn new(
        data: FieldBinding<'a>,
        scratch: &'a mut ScratchArrays,
        ctx: TimeStepContext,
    ) -> Result<Self> {
        Ok(Self {
            view: LaunchView::new(data, scratch, ctx)?,
        })
    }

    fn require(&self, kind: StepKind, v: VolumeIndex) -> Result<()> {
        let shape = self.view.shape();
        if kind.axis().is_some_and(|n| n >= shape.dim()) {
            return Err(Error::InvalidArgument(format!(
                "{kind} is invalid for d={}",
                shape.dim()
            )));
        }
        if v.patch >= shape.patches() || !iteration_range(kind, shape).contains(v.cell) {
            return Err(Error::IndexOutOfBounds {
                patch: v.patch,
                cell: v.cell,
                unknown: 0,
            });
        }
        Ok(())
    }

    pub fn copy(&mut self, v: VolumeIndex) -> Result<()> {
        self.require(StepKind::CopyInterior, v)?;
        // SAFETY: `&mut self` excludes any concurrent access.
        unsafe { self.view.copy(v.patch, v.cell) };
        Ok(())
    }

    pub fn flux(&mut self, v: VolumeIndex, axis: usize) -> Result<()> {
        self.require(StepKind::FluxAlongAxis(axis), v)?;
        unsafe { self.view.flux(v.patch, v.cell, axis) }
    }

    pub fn eigenvalue(&mut self, v: VolumeIndex, axis: usize) -> Result<()> {
        self.require(StepKind::EigenvalueAlongAxis(axis), v)?;
        unsafe { self.view.eigenvalue(v.patch, v.cell, axis) }
    }

    pub fn accumulate(&mut self, v: VolumeIndex, axis: usize) -> Result<()> {
        self.require(StepKind::AccumulateAlongAxis(axis), v)?;
        unsafe { self.view.accumulate(v.patch, v.cell, axis) };
        Ok(())
    }

    pub fn reduce_value(&mut self, v: VolumeIndex) -> Result<f64> {
        self.require(StepKind::ReduceMaxEigenvalue, v)?;
        unsafe { self.view.reduce_value(v.patch, v.cell) }
    }
}
