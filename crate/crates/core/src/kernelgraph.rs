//! Algorithmic steps of one kernel launch and their dependencies.
//!
//! A launch copies the old interior into the output, evaluates fluxes and
//! wave speeds along every axis on the haloed face range, accumulates the
//! Rusanov face fluxes into the output axis by axis and optionally reduces
//! the maximum wave speed of the new solution.

use std::borrow::Cow;
use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::patchdata::{BatchShape, Cell, MAX_DIM};

const AXIS_NAMES: [&str; MAX_DIM] = ["x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepKind {
    CopyInterior,
    FluxAlongAxis(usize),
    EigenvalueAlongAxis(usize),
    AccumulateAlongAxis(usize),
    ReduceMaxEigenvalue,
}

impl StepKind {
    pub fn axis(self) -> Option<usize> {
        match self {
            StepKind::FluxAlongAxis(n)
            | StepKind::EigenvalueAlongAxis(n)
            | StepKind::AccumulateAlongAxis(n) => Some(n),
            _ => None,
        }
    }

    pub fn reads(self) -> Vec<ArrayRole> {
        match self {
            StepKind::CopyInterior => vec![ArrayRole::Input],
            StepKind::FluxAlongAxis(_) | StepKind::EigenvalueAlongAxis(_) => {
                vec![ArrayRole::Input]
            }
            StepKind::AccumulateAlongAxis(n) => vec![
                ArrayRole::Input,
                ArrayRole::Output,
                ArrayRole::TmpFlux(n),
                ArrayRole::TmpLambda(n),
            ],
            StepKind::ReduceMaxEigenvalue => vec![ArrayRole::Output],
        }
    }

    pub fn writes(self) -> ArrayRole {
        match self {
            StepKind::CopyInterior | StepKind::AccumulateAlongAxis(_) => ArrayRole::Output,
            StepKind::FluxAlongAxis(n) => ArrayRole::TmpFlux(n),
            StepKind::EigenvalueAlongAxis(n) => ArrayRole::TmpLambda(n),
            StepKind::ReduceMaxEigenvalue => ArrayRole::ReducedEigenvalue,
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StepKind::CopyInterior => f.write_str("copy"),
            StepKind::FluxAlongAxis(n) => write!(f, "flux-{}", AXIS_NAMES[n]),
            StepKind::EigenvalueAlongAxis(n) => write!(f, "eigenvalue-{}", AXIS_NAMES[n]),
            StepKind::AccumulateAlongAxis(n) => write!(f, "accumulate-{}", AXIS_NAMES[n]),
            StepKind::ReduceMaxEigenvalue => f.write_str("reduce"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArrayRole {
    Input,
    Output,
    TmpFlux(usize),
    TmpLambda(usize),
    ReducedEigenvalue,
}

/// Axis-aligned box of cells within one patch; coordinate 0 runs fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRange {
    dim: usize,
    lo: Cell,
    extent: [usize; MAX_DIM],
}

impl CellRange {
    /// `[-1, p]^d`, the union of all step ranges.
    pub fn haloed(shape: BatchShape) -> Self {
        let mut extent = [1; MAX_DIM];
        let mut lo = [0; MAX_DIM];
        for axis in 0..shape.dim() {
            extent[axis] = shape.haloed_width();
            lo[axis] = -1;
        }
        Self {
            dim: shape.dim(),
            lo,
            extent,
        }
    }

    /// `[0, p)^d`.
    pub fn interior(shape: BatchShape) -> Self {
        let mut extent = [1; MAX_DIM];
        extent[..shape.dim()].fill(shape.patch_size());
        Self {
            dim: shape.dim(),
            lo: [0; MAX_DIM],
            extent,
        }
    }

    /// Interior range extended by the halo along `axis`.
    pub fn faces(shape: BatchShape, axis: usize) -> Self {
        let mut range = Self::interior(shape);
        range.lo[axis] = -1;
        range.extent[axis] = shape.haloed_width();
        range
    }

    pub fn len(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn cell_at(&self, mut i: usize) -> Cell {
        let mut cell = [0; MAX_DIM];
        for ((c, lo), extent) in cell.iter_mut().zip(self.lo).zip(self.extent).take(self.dim) {
            *c = lo + (i % extent) as i32;
            i /= extent;
        }
        cell
    }

    #[inline]
    pub fn contains(&self, cell: Cell) -> bool {
        (0..self.dim).all(|axis| {
            let offset = cell[axis] - self.lo[axis];
            offset >= 0 && (offset as usize) < self.extent[axis]
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }
}

pub fn iteration_range(kind: StepKind, shape: BatchShape) -> CellRange {
    match kind {
        StepKind::FluxAlongAxis(n) | StepKind::EigenvalueAlongAxis(n) => CellRange::faces(shape, n),
        _ => CellRange::interior(shape),
    }
}

/// Whether a lane of the union range `[-1, p]^d` does work in step `kind`.
pub fn mask_predicate(kind: StepKind, cell: Cell, shape: BatchShape) -> bool {
    iteration_range(kind, shape).contains(cell)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSpec {
    pub kind: StepKind,
    pub range: CellRange,
    pub reads: Vec<ArrayRole>,
    pub writes: ArrayRole,
}

impl StepSpec {
    pub fn new(kind: StepKind, shape: BatchShape) -> Self {
        Self {
            kind,
            range: iteration_range(kind, shape),
            reads: kind.reads(),
            writes: kind.writes(),
        }
    }
}

pub fn step_sequence(shape: BatchShape, with_reduction: bool) -> Vec<StepSpec> {
    let d = shape.dim();
    let kinds = std::iter::once(StepKind::CopyInterior)
        .chain((0..d).map(StepKind::FluxAlongAxis))
        .chain((0..d).map(StepKind::EigenvalueAlongAxis))
        .chain((0..d).map(StepKind::AccumulateAlongAxis))
        .chain(with_reduction.then_some(StepKind::ReduceMaxEigenvalue));
    kinds.map(|kind| StepSpec::new(kind, shape)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskNode {
    pub patch: usize,
    /// Position of the node's step in the plan's step list.
    pub step: usize,
    pub kind: StepKind,
}

/// `(patch, step)` nodes with dependency edges; node `i` belongs to patch
/// `i / steps_per_patch`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    steps_per_patch: usize,
    nodes: Vec<TaskNode>,
    successors: Vec<Vec<usize>>,
    predecessors: Vec<Vec<usize>>,
}

impl TaskGraph {
    pub fn build(shape: BatchShape, steps: &[StepSpec]) -> Self {
        let per_patch = steps.len();
        let local_edges = local_dependencies(steps);
        let mut graph = Self::with_nodes(
            (0..shape.patches())
                .flat_map(|patch| {
                    steps.iter().enumerate().map(move |(step, s)| TaskNode {
                        patch,
                        step,
                        kind: s.kind,
                    })
                })
                .collect(),
            per_patch,
        );
        for patch in 0..shape.patches() {
            let base = patch * per_patch;
            for &(from, to) in &local_edges {
                graph.add_edge(base + from, base + to);
            }
        }
        graph
    }

    fn with_nodes(nodes: Vec<TaskNode>, steps_per_patch: usize) -> Self {
        let n = nodes.len();
        Self {
            steps_per_patch,
            nodes,
            successors: vec![Vec::new(); n],
            predecessors: vec![Vec::new(); n],
        }
    }

    /// Adds `from -> to` (`to` waits for `from`).
    pub fn add_edge(&mut self, from: usize, to: usize) {
        self.successors[from].push(to);
        self.predecessors[to].push(from);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[TaskNode] {
        &self.nodes
    }

    pub fn steps_per_patch(&self) -> usize {
        self.steps_per_patch
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.successors[node]
    }

    pub fn predecessors(&self, node: usize) -> &[usize] {
        &self.predecessors[node]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(from, to)| to.iter().map(move |&t| (from, t)))
    }

    pub fn node_of(&self, patch: usize, kind: StepKind) -> Option<usize> {
        let base = patch * self.steps_per_patch;
        self.nodes
            .get(base..base + self.steps_per_patch)?
            .iter()
            .position(|n| n.kind == kind)
            .map(|i| base + i)
    }

    /// Kahn's algorithm; fails if the graph has a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let mut indegree: Vec<usize> = self.predecessors.iter().map(Vec::len).collect();
        let mut ready: VecDeque<usize> = (0..self.nodes.len())
            .filter(|&n| indegree[n] == 0)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(node) = ready.pop_front() {
            order.push(node);
            for &succ in &self.successors[node] {
                indegree[succ] -= 1;
                if indegree[succ] == 0 {
                    ready.push_back(succ);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::CycleDetected {
                unresolved: self.nodes.len() - order.len(),
            });
        }
        Ok(order)
    }

    pub fn has_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            for &s in &self.successors[n] {
                if !std::mem::replace(&mut seen[s], true) {
                    stack.push(s);
                }
            }
        }
        false
    }

    /// One `patch:step -> patch:step` line per edge, sorted.
    pub fn dump_edges(&self) -> String {
        let label = |n: usize| format!("{}:{}", self.nodes[n].patch, self.nodes[n].kind);
        let mut lines: Vec<String> = self
            .edges()
            .map(|(from, to)| format!("{} -> {}", label(from), label(to)))
            .collect();
        lines.sort();
        lines.into_iter().map(|l| l + "\n").collect()
    }
}

/// Edges among the steps of one patch, as `(from, to)` step positions.
///
/// Flux, eigenvalue and copy steps only read the input and are independent.
/// Accumulation along an axis waits for the copy and that axis' temporaries;
/// accumulations are chained because they update the same output. The
/// reduction waits for the last accumulation.
fn local_dependencies(steps: &[StepSpec]) -> Vec<(usize, usize)> {
    let find = |kind: StepKind| steps.iter().position(|s| s.kind == kind);
    let mut edges = Vec::new();
    let mut last_update = None;
    for (i, step) in steps.iter().enumerate() {
        match step.kind {
            StepKind::AccumulateAlongAxis(n) => {
                let mut deps = vec![
                    find(StepKind::CopyInterior),
                    find(StepKind::FluxAlongAxis(n)),
                    find(StepKind::EigenvalueAlongAxis(n)),
                ];
                if last_update != find(StepKind::CopyInterior) {
                    deps.push(last_update);
                }
                edges.extend(
                    deps.into_iter()
                        .flatten()
                        .filter(|&d| d < i)
                        .map(|d| (d, i)),
                );
                last_update = Some(i);
            }
            StepKind::CopyInterior => last_update = Some(i),
            StepKind::ReduceMaxEigenvalue => {
                edges.extend(last_update.filter(|&d| d < i).map(|d| (d, i)));
            }
            _ => {}
        }
    }
    edges
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelPlan {
    shape: BatchShape,
    with_reduction: bool,
    steps: Vec<StepSpec>,
    dag: TaskGraph,
}

impl KernelPlan {
    pub fn new(shape: BatchShape, with_reduction: bool) -> Self {
        let steps = step_sequence(shape, with_reduction);
        let dag = TaskGraph::build(shape, &steps);
        Self {
            shape,
            with_reduction,
            steps,
            dag,
        }
    }

    /// A plan over a subset of the standard steps, e.g. a single axis.
    ///
    /// Steps must appear in an order consistent with their data flow: an
    /// accumulation after its axis' temporaries (and after the copy, if
    /// present), the reduction last. Without a copy the accumulations add to
    /// whatever the output already holds: the patch outputs in shared mode,
    /// the staging buffer otherwise.
    pub fn from_steps(shape: BatchShape, kinds: &[StepKind]) -> Result<Self> {
        let mut seen = Vec::new();
        for (i, &kind) in kinds.iter().enumerate() {
            if kind.axis().is_some_and(|n| n >= shape.dim()) {
                return Err(Error::InvalidArgument(format!(
                    "{kind} is invalid for d={}",
                    shape.dim()
                )));
            }
            if seen.contains(&kind) {
                return Err(Error::InvalidArgument(format!("{kind} appears twice")));
            }
            let ok = match kind {
                StepKind::AccumulateAlongAxis(n) => {
                    [StepKind::FluxAlongAxis(n), StepKind::EigenvalueAlongAxis(n)]
                        .iter()
                        .all(|k| seen.contains(k))
                        && !kinds[i..].contains(&StepKind::CopyInterior)
                }
                StepKind::ReduceMaxEigenvalue => {
                    i + 1 == kinds.len() && seen.contains(&StepKind::CopyInterior)
                }
                _ => true,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "{kind} precedes the steps it depends on"
                )));
            }
            seen.push(kind);
        }
        let steps: Vec<StepSpec> = kinds.iter().map(|&k| StepSpec::new(k, shape)).collect();
        let dag = TaskGraph::build(shape, &steps);
        Ok(Self {
            shape,
            with_reduction: kinds.contains(&StepKind::ReduceMaxEigenvalue),
            steps,
            dag,
        })
    }

    pub fn shape(&self) -> BatchShape {
        self.shape
    }

    pub fn with_reduction(&self) -> bool {
        self.with_reduction
    }

    pub fn steps(&self) -> &[StepSpec] {
        &self.steps
    }

    pub fn dag(&self) -> &TaskGraph {
        &self.dag
    }

    /// The plan's graph, either the prebuilt one or assembled now.
    pub(crate) fn graph(&self, rebuild: bool) -> Cow<'_, TaskGraph> {
        if rebuild {
            Cow::Owned(TaskGraph::build(self.shape, &self.steps))
        } else {
            Cow::Borrowed(&self.dag)
        }
    }

    /// Microkernel invocations per patch, summed over all steps.
    pub fn invocations_per_patch(&self) -> usize {
        self.steps.iter().map(|s| s.range.len()).sum()
    }
}
