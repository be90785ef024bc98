//! Seeded initial data.

use std::f64::consts::TAU;

use crate::equations::{ConservedState, EulerParameters};
use crate::error::Result;
use crate::kernelgraph::CellRange;
use crate::memory::ScatteredPatchSet;
use crate::patchdata::{BatchShape, MAX_DIM};

pub const LCG_MULTIPLIER: u64 = 6364136223846793005;
pub const LCG_INCREMENT: u64 = 1442695040888963407;

/// 64-bit linear congruential generator, `state = state * a + c mod 2^64`.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(LCG_MULTIPLIER)
            .wrapping_add(LCG_INCREMENT);
        self.state
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Cells per period of the slowest wave.
const PERIOD_CELLS: f64 = 32.0;

/// One plane wave per primitive variable.
#[derive(Debug, Clone, Copy)]
struct Wave {
    phase: f64,
    wavenumber: [f64; MAX_DIM],
}

impl Wave {
    fn draw(rng: &mut Lcg) -> Self {
        let phase = TAU * rng.next_f64();
        let mut wavenumber = [0.0; MAX_DIM];
        for k in &mut wavenumber {
            *k = (1.0 + rng.next_f64()) * TAU / PERIOD_CELLS;
        }
        Self { phase, wavenumber }
    }

    fn at(&self, x: &[f64]) -> f64 {
        let arg: f64 = x.iter().zip(&self.wavenumber).map(|(x, k)| x * k).sum();
        (arg + self.phase).sin()
    }
}

/// Smooth admissible field on `shape`, identical bits for identical seeds.
///
/// Patches sit side by side along axis 0, so halo layers agree with the
/// neighbouring interiors. Density and pressure lie in `[0.5, 2]`, velocity
/// components in `[-0.5, 0.5]`.
pub fn init_field(
    shape: BatchShape,
    seed: u64,
    params: EulerParameters,
) -> Result<ScatteredPatchSet> {
    let d = shape.dim();
    let mut rng = Lcg::new(seed);
    let waves: Vec<Wave> = (0..d + 2).map(|_| Wave::draw(&mut rng)).collect();
    let mut set = ScatteredPatchSet::new(shape)?;
    let enumerator = set.input_enumerator();
    let p = shape.patch_size() as f64;
    for patch in 0..shape.patches() {
        let data = set.input_mut(patch);
        for cell in CellRange::haloed(shape).iter() {
            let mut x = [0.0; MAX_DIM];
            for a in 0..d {
                x[a] = cell[a] as f64;
            }
            x[0] += patch as f64 * p;
            let x = &x[..d];
            let rho = 1.25 + 0.75 * waves[0].at(x);
            let mut u = [0.0; MAX_DIM];
            for a in 0..d {
                u[a] = 0.5 * waves[1 + a].at(x);
            }
            let pressure = 1.25 + 0.75 * waves[d + 1].at(x);
            let q = ConservedState::from_primitive(rho, &u[..d], pressure, params)?;
            for (k, value) in q.as_slice().iter().enumerate() {
                data[enumerator.offset(0, cell, k)] = *value;
            }
        }
    }
    Ok(set)
}
