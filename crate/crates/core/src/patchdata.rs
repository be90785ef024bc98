//! Patch-batch storage and the enumerators that place `(patch, cell, unknown)`
//! triples in linear memory.
//!
//! Spatial coordinate 0 is the fastest running index everywhere. Haloed arrays
//! address cells in `[-1, p]^d`, interior arrays in `[0, p)^d`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Cell coordinates; entries beyond the batch dimension are zero.
pub type Cell = [i32; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BatchShape {
    dim: usize,
    patch_size: usize,
    patches: usize,
}

impl BatchShape {
    pub fn new(dim: usize, patch_size: usize, patches: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "d must be 2 or 3, got {dim}"
            )));
        }
        if patch_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "patch size must be at least 2, got {patch_size}"
            )));
        }
        if patches == 0 {
            return Err(Error::InvalidArgument(
                "a batch needs at least one patch".into(),
            ));
        }
        Ok(Self {
            dim,
            patch_size,
            patches,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Volumes per axis per patch (`p`).
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Number of patches (`T`).
    pub fn patches(&self) -> usize {
        self.patches
    }

    /// Unknowns per volume (`N = d + 2`).
    pub fn unknowns(&self) -> usize {
        self.dim + 2
    }

    pub fn haloed_width(&self) -> usize {
        self.patch_size + 2
    }

    pub fn haloed_volumes(&self) -> usize {
        self.haloed_width().pow(self.dim as u32)
    }

    pub fn interior_volumes(&self) -> usize {
        self.patch_size.pow(self.dim as u32)
    }

    pub fn input_len(&self) -> usize {
        self.unknowns() * self.haloed_volumes() * self.patches
    }

    pub fn output_len(&self) -> usize {
        self.unknowns() * self.interior_volumes() * self.patches
    }

    pub fn with_patches(&self, patches: usize) -> Result<Self> {
        Self::new(self.dim, self.patch_size, patches)
    }
}

impl fmt::Display for BatchShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={} p={} T={}", self.dim, self.patch_size, self.patches)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layout {
    /// Unknowns of one volume are adjacent.
    Aos,
    /// One block per unknown spanning the whole batch.
    Soa,
    /// One SoA block per patch, patches stored one after another.
    Aosoa,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::Aos, Layout::Soa, Layout::Aosoa];

    pub fn tag(self) -> u32 {
        match self {
            Layout::Aos => 0,
            Layout::Soa => 1,
            Layout::Aosoa => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown layout tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Layout::Aos => "aos",
            Layout::Soa => "soa",
            Layout::Aosoa => "aosoa",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown layout '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VolumeIndex {
    pub patch: usize,
    pub cell: Cell,
}

impl VolumeIndex {
    pub fn new(patch: usize, cell: Cell) -> Self {
        Self { patch, cell }
    }
}

/// Precomputed offset function for one array of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Enumerator {
    layout: Layout,
    dim: usize,
    unknowns: usize,
    patches: usize,
    width: usize,
    volumes: usize,
    shift: i32,
}

impl Enumerator {
    pub fn new(layout: Layout, shape: BatchShape, haloed: bool) -> Self {
        Self::with_unknowns(layout, shape, haloed, shape.unknowns())
    }

    /// Enumerator for an array carrying `unknowns` scalars per volume.
    pub fn with_unknowns(layout: Layout, shape: BatchShape, haloed: bool, unknowns: usize) -> Self {
        let width = if haloed {
            shape.haloed_width()
        } else {
            shape.patch_size()
        };
        Self {
            layout,
            dim: shape.dim(),
            unknowns,
            patches: shape.patches(),
            width,
            volumes: width.pow(shape.dim() as u32),
            shift: i32::from(haloed),
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn unknowns(&self) -> usize {
        self.unknowns
    }

    pub fn volumes_per_patch(&self) -> usize {
        self.volumes
    }

    pub fn len(&self) -> usize {
        self.unknowns * self.volumes * self.patches
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, cell: Cell) -> bool {
        let lo = -self.shift;
        let hi = self.width as i32 - self.shift;
        cell[..self.dim].iter().all(|&c| (lo..hi).contains(&c))
            && cell[self.dim..].iter().all(|&c| c == 0)
    }

    /// Linear position of `cell` within one patch.
    #[inline]
    pub fn linear_cell(&self, cell: Cell) -> usize {
        let mut lin = 0;
        for axis in (0..self.dim).rev() {
            lin = lin * self.width + (cell[axis] + self.shift) as usize;
        }
        lin
    }

    #[inline]
    pub fn offset_linear(&self, patch: usize, lin: usize, unknown: usize) -> usize {
        match self.layout {
            Layout::Aos => (patch * self.volumes + lin) * self.unknowns + unknown,
            Layout::Soa => (unknown * self.patches + patch) * self.volumes + lin,
            Layout::Aosoa => (patch * self.unknowns + unknown) * self.volumes + lin,
        }
    }

    /// Unchecked offset; callers guarantee the index is in bounds.
    #[inline]
    pub fn offset(&self, patch: usize, cell: Cell, unknown: usize) -> usize {
        self.offset_linear(patch, self.linear_cell(cell), unknown)
    }

    pub fn checked_offset(&self, v: VolumeIndex, unknown: usize) -> Result<usize> {
        if v.patch >= self.patches || unknown >= self.unknowns || !self.contains(v.cell) {
            return Err(Error::IndexOutOfBounds {
                patch: v.patch,
                cell: v.cell,
                unknown,
            });
        }
        Ok(self.offset(v.patch, v.cell, unknown))
    }
}

/// Storage offset of `(v, unknown)` in an array of the given layout.
pub fn enumerate(
    layout: Layout,
    shape: BatchShape,
    haloed: bool,
    v: VolumeIndex,
    unknown: usize,
) -> Result<usize> {
    Enumerator::new(layout, shape, haloed).checked_offset(v, unknown)
}

/// Extent of the (at most) three-axis index space a haloed batch is packed
/// into; the last axis runs fastest and carries spatial coordinate 0.
pub fn packed_extent(shape: BatchShape) -> [usize; 3] {
    let m = shape.haloed_width();
    match shape.dim() {
        2 => [shape.patches(), m, m],
        _ => [shape.patches(), m * m, m],
    }
}

pub fn flatten_index(shape: BatchShape, patch: usize, cell: Cell) -> [usize; 3] {
    let m = shape.haloed_width();
    let c = |axis: usize| (cell[axis] + 1) as usize;
    match shape.dim() {
        2 => [patch, c(1), c(0)],
        _ => [patch, c(2) * m + c(1), c(0)],
    }
}

pub fn unflatten_index(shape: BatchShape, index: [usize; 3]) -> (usize, Cell) {
    let m = shape.haloed_width();
    let c = |v: usize| v as i32 - 1;
    match shape.dim() {
        2 => (index[0], [c(index[2]), c(index[1]), 0]),
        _ => (index[0], [c(index[2]), c(index[1] % m), c(index[1] / m)]),
    }
}

/// Row-major linearization of a packed index.
pub fn packed_linear(shape: BatchShape, index: [usize; 3]) -> usize {
    let e = packed_extent(shape);
    (index[0] * e[1] + index[1]) * e[2] + index[2]
}

pub fn packed_from_linear(shape: BatchShape, linear: usize) -> [usize; 3] {
    let e = packed_extent(shape);
    [
        linear / (e[1] * e[2]),
        (linear / e[2]) % e[1],
        linear % e[2],
    ]
}

/// Input (with halo) and output (interior only) arrays for `T` patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    shape: BatchShape,
    layout: Layout,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl PatchBatch {
    pub fn new(shape: BatchShape, layout: Layout) -> Result<Self> {
        Ok(Self {
            shape,
            layout,
            input: try_zeroed(shape.input_len())?,
            output: try_zeroed(shape.output_len())?,
        })
    }

    pub fn from_parts(
        shape: BatchShape,
        layout: Layout,
        input: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<Self> {
        if input.len() != shape.input_len() || output.len() != shape.output_len() {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "{} input and {} output entries",
                    shape.input_len(),
                    shape.output_len()
                ),
                found: format!("{} and {}", input.len(), output.len()),
            });
        }
        Ok(Self {
            shape,
            layout,
            input,
            output,
        })
    }

    pub fn shape(&self) -> BatchShape {
        self.shape
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn input_enumerator(&self) -> Enumerator {
        Enumerator::new(self.layout, self.shape, true)
    }

    pub fn output_enumerator(&self) -> Enumerator {
        Enumerator::new(self.layout, self.shape, false)
    }

    pub fn input_at(&self, v: VolumeIndex, unknown: usize) -> Result<f64> {
        Ok(self.input[self.input_enumerator().checked_offset(v, unknown)?])
    }

    pub fn set_input(&mut self, v: VolumeIndex, unknown: usize, value: f64) -> Result<()> {
        let at = self.input_enumerator().checked_offset(v, unknown)?;
        self.input[at] = value;
        Ok(())
    }

    pub fn output_at(&self, v: VolumeIndex, unknown: usize) -> Result<f64> {
        Ok(self.output[self.output_enumerator().checked_offset(v, unknown)?])
    }

    /// Output re-ordered into AoS, the canonical order used for comparisons.
    pub fn canonical_output(&self) -> Vec<f64> {
        reorder(&self.output, self.output_enumerator(), Layout::Aos)
    }

    pub fn canonical_input(&self) -> Vec<f64> {
        reorder(&self.input, self.input_enumerator(), Layout::Aos)
    }

    /// Writes the batch as little-endian `u32` header `(d, p, N, T, layout)`
    /// followed by the input and then the output array as `f64`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let s = self.shape;
        for v in [s.dim(), s.patch_size(), s.unknowns(), s.patches()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.layout.tag().to_le_bytes())?;
        for v in self.input.iter().chain(&self.output) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let mut header = [0u32; 5];
        for h in &mut header {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf).map_err(io)?;
            *h = u32::from_le_bytes(buf);
        }
        let [dim, p, n, t, tag] = header.map(|v| v as usize);
        let shape = BatchShape::new(dim, p, t)?;
        if n != shape.unknowns() {
            return Err(Error::Format(format!("N={n} does not match d={dim}")));
        }
        let layout = Layout::from_tag(tag as u32)?;
        let mut read_array = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf).map_err(io)?;
                out.push(f64::from_le_bytes(buf));
            }
            Ok(out)
        };
        let input = read_array(shape.input_len())?;
        let output = read_array(shape.output_len())?;
        Self::from_parts(shape, layout, input, output)
    }
}

fn reorder(data: &[f64], from: Enumerator, to: Layout) -> Vec<f64> {
    let target = Enumerator { layout: to, ..from };
    let mut out = vec![0.0; data.len()];
    for patch in 0..from.patches {
        for lin in 0..from.volumes {
            for k in 0..from.unknowns {
                out[target.offset_linear(patch, lin, k)] = data[from.offset_linear(patch, lin, k)];
            }
        }
    }
    out
}

pub(crate) fn try_zeroed(len: usize) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| Error::Allocation {
        bytes: len * std::mem::size_of::<f64>(),
    })?;
    v.resize(len, 0.0);
    Ok(v)
}

/// Every cell of the `width^dim` cube starting at `lo`, coordinate 0 fastest.
#[cfg(test)]
fn cube_cells(dim: usize, lo: i32, width: usize) -> impl Iterator<Item = Cell> {
    let count = width.pow(dim as u32);
    (0..count).map(move |mut i| {
        let mut cell = [0; MAX_DIM];
        for c in cell.iter_mut().take(dim) {
            *c = lo + (i % width) as i32;
            i /= width;
        }
        cell
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn enumerate_examples() {
        let shape = BatchShape::new(2, 4, 2).unwrap();
        let v = |patch, x, y| VolumeIndex::new(patch, [x, y, 0]);
        assert_eq!(
            enumerate(Layout::Aos, shape, true, v(0, -1, -1), 0).unwrap(),
            0
        );
        assert_eq!(
            enumerate(Layout::Aos, shape, true, v(0, 0, -1), 1).unwrap(),
            5
        );
        assert_eq!(
            enumerate(Layout::Soa, shape, true, v(1, -1, -1), 3).unwrap(),
            252
        );
        assert_eq!(
            enumerate(Layout::Aosoa, shape, true, v(1, -1, -1), 3).unwrap(),
            36 * 7
        );
    }

    #[test]
    fn enumerate_rejects_out_of_bounds() {
        let shape = BatchShape::new(2, 4, 2).unwrap();
        let bad = [
            (VolumeIndex::new(2, [0, 0, 0]), 0),
            (VolumeIndex::new(0, [-2, 0, 0]), 0),
            (VolumeIndex::new(0, [0, 5, 0]), 0),
            (VolumeIndex::new(0, [0, 0, 1]), 0),
            (VolumeIndex::new(0, [0, 0, 0]), 4),
        ];
        for (v, k) in bad {
            assert!(matches!(
                enumerate(Layout::Aos, shape, true, v, k),
                Err(Error::IndexOutOfBounds { .. })
            ));
        }
        // interior arrays exclude the halo
        let halo = VolumeIndex::new(0, [-1, 0, 0]);
        assert!(enumerate(Layout::Soa, shape, false, halo, 0).is_err());
        assert!(enumerate(Layout::Soa, shape, false, VolumeIndex::new(0, [3, 3, 0]), 0).is_ok());
    }

    #[test]
    fn enumerators_are_bijective() {
        for dim in [2, 3] {
            for p in [4, 6, 8] {
                for t in [1, 2, 4] {
                    let shape = BatchShape::new(dim, p, t).unwrap();
                    for layout in Layout::ALL {
                        for haloed in [true, false] {
                            let en = Enumerator::new(layout, shape, haloed);
                            let (lo, width) = if haloed { (-1, p + 2) } else { (0, p) };
                            let mut seen = HashSet::new();
                            for patch in 0..t {
                                for cell in cube_cells(dim, lo, width) {
                                    for k in 0..shape.unknowns() {
                                        let off = en
                                            .checked_offset(VolumeIndex::new(patch, cell), k)
                                            .unwrap();
                                        assert!(off < en.len());
                                        assert!(seen.insert(off));
                                    }
                                }
                            }
                            assert_eq!(seen.len(), en.len());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn adjacency() {
        let shape = BatchShape::new(3, 4, 2).unwrap();
        let aos = Enumerator::new(Layout::Aos, shape, true);
        let soa = Enumerator::new(Layout::Soa, shape, true);
        for patch in 0..2 {
            let cells: Vec<_> = cube_cells(3, -1, 6).collect();
            for (i, &cell) in cells.iter().enumerate() {
                for k in 0..4 {
                    assert_eq!(
                        aos.offset(patch, cell, k + 1) - aos.offset(patch, cell, k),
                        1
                    );
                }
                if let Some(&next) = cells.get(i + 1) {
                    for k in 0..5 {
                        assert_eq!(soa.offset(patch, next, k) - soa.offset(patch, cell, k), 1);
                    }
                }
            }
        }
    }

    #[test]
    fn flatten_round_trip_2d() {
        let shape = BatchShape::new(2, 4, 1).unwrap();
        let packed = flatten_index(shape, 0, [-1, -1, 0]);
        assert_eq!(packed_linear(shape, packed), 0);
        assert_eq!(unflatten_index(shape, packed), (0, [-1, -1, 0]));
    }

    #[test]
    fn flatten_is_exhaustive_bijection() {
        for (p, t) in [(4, 3), (8, 4)] {
            let shape = BatchShape::new(3, p, t).unwrap();
            let en = Enumerator::new(Layout::Aos, shape, true);
            let mut seen = vec![false; t * shape.haloed_volumes()];
            for patch in 0..t {
                for cell in cube_cells(3, -1, p + 2) {
                    let packed = flatten_index(shape, patch, cell);
                    assert_eq!(unflatten_index(shape, packed), (patch, cell));
                    let lin = packed_linear(shape, packed);
                    assert_eq!(packed_from_linear(shape, lin), packed);
                    // fastest packed axis matches the enumerator's fastest coordinate
                    assert_eq!(lin, patch * shape.haloed_volumes() + en.linear_cell(cell));
                    assert!(!std::mem::replace(&mut seen[lin], true));
                }
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }

    #[test]
    fn canonical_output_matches_enumerators() {
        let shape = BatchShape::new(2, 4, 3).unwrap();
        let mut batch = PatchBatch::new(shape, Layout::Soa).unwrap();
        for (i, v) in batch.output.iter_mut().enumerate() {
            *v = i as f64;
        }
        let canonical = batch.canonical_output();
        let aos = Enumerator::new(Layout::Aos, shape, false);
        for patch in 0..3 {
            for cell in cube_cells(2, 0, 4) {
                for k in 0..4 {
                    let v = VolumeIndex::new(patch, cell);
                    assert_eq!(
                        canonical[aos.checked_offset(v, k).unwrap()],
                        batch.output_at(v, k).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn dump_round_trip_and_header() {
        let shape = BatchShape::new(3, 2, 2).unwrap();
        let mut batch = PatchBatch::new(shape, Layout::Aosoa).unwrap();
        for (i, v) in batch.input.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        batch.output[3] = -0.0;
        batch.output[4] = f64::MIN_POSITIVE;
        let mut bytes = Vec::new();
        batch.write_dump(&mut bytes).unwrap();
        assert_eq!(
            &bytes[..20],
            &[3, 0, 0, 0, 2, 0, 0, 0, 5, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]
        );
        assert_eq!(
            bytes.len(),
            20 + 8 * (shape.input_len() + shape.output_len())
        );
        let back = PatchBatch::read_dump(bytes.as_slice()).unwrap();
        assert_eq!(back.layout(), Layout::Aosoa);
        assert!(back
            .input
            .iter()
            .zip(&batch.input)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(back
            .output
            .iter()
            .zip(&batch.output)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(PatchBatch::read_dump(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn shape_sizes() {
        let s = BatchShape::new(2, 4, 3).unwrap();
        assert_eq!(s.unknowns(), 4);
        assert_eq!(s.input_len(), 4 * 36 * 3);
        assert_eq!(s.output_len(), 4 * 16 * 3);
        assert!(BatchShape::new(4, 4, 1).is_err());
        assert!(BatchShape::new(2, 1, 1).is_err());
        assert!(BatchShape::new(2, 4, 0).is_err());
    }
}
