#![allow(dead_code)]

use fvpatch::bench::Lcg;
use fvpatch::memory::{execute_launch, LaunchRequest};
use fvpatch::{
    BatchShape, DeviceArena, EulerParameters, ExecOptions, KernelPlan, LaunchOutcome, Layout,
    Realization, ReductionStrategy, ScatteredPatchSet, TimeStepContext, TransferMode, WorkerPool,
};

pub const GAMMA: f64 = 1.4;
pub const DT: f64 = 1e-3;
pub const H: f64 = 0.05;

pub fn ctx() -> TimeStepContext {
    TimeStepContext::new(DT, H, EulerParameters::new(GAMMA).unwrap()).unwrap()
}

/// Haloed position of `c` (coordinates in `-1..=p`), axis 0 fastest.
pub fn haloed_index(c: &[i32], p: usize) -> usize {
    let m = p + 2;
    c.iter().rev().fold(0, |acc, &x| acc * m + (x + 1) as usize)
}

pub fn interior_index(c: &[i32], p: usize) -> usize {
    c.iter().rev().fold(0, |acc, &x| acc * p + x as usize)
}

/// Every `d`-tuple in `lo..hi` per axis, axis 0 fastest.
pub fn cells(d: usize, lo: i32, hi: i32) -> Vec<Vec<i32>> {
    let w = (hi - lo) as usize;
    (0..w.pow(d as u32))
        .map(|i| {
            (0..d)
                .map(|a| lo + ((i / w.pow(a as u32)) % w) as i32)
                .collect()
        })
        .collect()
}

pub fn pressure(q: &[f64], gamma: f64) -> f64 {
    let d = q.len() - 2;
    let mut m2 = 0.0;
    for i in 0..d {
        m2 += q[1 + i] * q[1 + i];
    }
    (gamma - 1.0) * (q[d + 1] - m2 / (2.0 * q[0]))
}

pub fn physical_flux(q: &[f64], n: usize, gamma: f64) -> Vec<f64> {
    let d = q.len() - 2;
    let p = pressure(q, gamma);
    let un = q[1 + n] / q[0];
    let mut f = vec![0.0; d + 2];
    f[0] = q[1 + n];
    for i in 0..d {
        f[1 + i] = if i == n {
            q[1 + i] * un + p
        } else {
            q[1 + i] * un
        };
    }
    f[d + 1] = un * (q[d + 1] + p);
    f
}

pub fn wave_speed(q: &[f64], n: usize, gamma: f64) -> f64 {
    let p = pressure(q, gamma);
    (q[1 + n] / q[0]).abs() + (gamma * p / q[0]).sqrt()
}

/// Rusanov flux through the face between `ql` and `qr` along `n`.
pub fn face_flux(ql: &[f64], qr: &[f64], n: usize, gamma: f64) -> Vec<f64> {
    let fl = physical_flux(ql, n, gamma);
    let fr = physical_flux(qr, n, gamma);
    let lambda = wave_speed(ql, n, gamma).max(wave_speed(qr, n, gamma));
    (0..ql.len())
        .map(|k| 0.5 * (fl[k] + fr[k]) - 0.5 * lambda * (qr[k] - ql[k]))
        .collect()
}

/// Straightforward evaluation of one time step on every patch: new interior
/// states and, if requested, the largest wave speed of the new states.
pub fn dense_reference(
    field: &ScatteredPatchSet,
    with_reduction: bool,
) -> (Vec<Vec<f64>>, Option<f64>) {
    let shape = field.shape();
    let (d, p, nq) = (shape.dim(), shape.patch_size(), shape.unknowns());
    let state = |patch: usize, c: &[i32]| -> Vec<f64> {
        let i = haloed_index(c, p) * nq;
        field.input(patch)[i..i + nq].to_vec()
    };
    let mut outputs = Vec::new();
    let mut max = 0.0f64;
    for patch in 0..shape.patches() {
        let mut out = vec![0.0; p.pow(d as u32) * nq];
        for c in cells(d, 0, p as i32) {
            let q = state(patch, &c);
            let mut new = q.clone();
            for n in 0..d {
                let mut l = c.clone();
                l[n] -= 1;
                let mut r = c.clone();
                r[n] += 1;
                let fl = face_flux(&state(patch, &l), &q, n, GAMMA);
                let fr = face_flux(&q, &state(patch, &r), n, GAMMA);
                for k in 0..nq {
                    new[k] += (DT / H) * (fl[k] - fr[k]);
                }
            }
            if with_reduction {
                for n in 0..d {
                    max = max.max(wave_speed(&new, n, GAMMA));
                }
            }
            let o = interior_index(&c, p) * nq;
            out[o..o + nq].copy_from_slice(&new);
        }
        outputs.push(out);
    }
    (outputs, with_reduction.then_some(max))
}

/// Independent random admissible states per cell (not smooth).
pub fn random_field(shape: BatchShape, seed: u64) -> ScatteredPatchSet {
    let d = shape.dim();
    let mut rng = Lcg::new(seed);
    let mut set = ScatteredPatchSet::new(shape).unwrap();
    for patch in 0..shape.patches() {
        for q in set.input_mut(patch).chunks_mut(d + 2) {
            let rho = 0.5 + 1.5 * rng.next_f64();
            let mut kinetic = 0.0;
            for i in 0..d {
                let u = rng.next_f64() - 0.5;
                q[1 + i] = rho * u;
                kinetic += u * u;
            }
            let p = 0.5 + 1.5 * rng.next_f64();
            q[0] = rho;
            q[d + 1] = p / (GAMMA - 1.0) + 0.5 * rho * kinetic;
        }
    }
    set
}

pub fn uniform_field(shape: BatchShape, q: &[f64]) -> ScatteredPatchSet {
    let mut set = ScatteredPatchSet::new(shape).unwrap();
    for patch in 0..shape.patches() {
        for cell in set.input_mut(patch).chunks_mut(q.len()) {
            cell.copy_from_slice(q);
        }
    }
    set
}

#[derive(Debug, Clone, Copy)]
pub struct Launch {
    pub realization: Realization,
    pub layout: Layout,
    pub mode: TransferMode,
    pub strategy: ReductionStrategy,
}

impl Launch {
    pub fn all() -> Vec<Launch> {
        let mut out = Vec::new();
        for realization in Realization::ALL {
            for layout in Layout::ALL {
                for mode in TransferMode::ALL {
                    for strategy in ReductionStrategy::ALL {
                        out.push(Launch {
                            realization,
                            layout,
                            mode,
                            strategy,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn sequential() -> Launch {
        Launch {
            realization: Realization::Sequential,
            layout: Layout::Aos,
            mode: TransferMode::Shared,
            strategy: ReductionStrategy::Serial,
        }
    }

    /// Runs one launch on a copy of `field`; returns the new interiors.
    pub fn run(
        &self,
        plan: &KernelPlan,
        field: &ScatteredPatchSet,
        pool: &WorkerPool,
        arena: &mut DeviceArena,
    ) -> (Vec<Vec<f64>>, LaunchOutcome, fvpatch::memory::LaunchTimings) {
        let mut patches = field.clone();
        let request = LaunchRequest {
            realization: self.realization,
            plan,
            layout: self.layout,
            mode: self.mode,
            ctx: ctx(),
            options: ExecOptions {
                reduction: self.strategy,
                ..Default::default()
            },
        };
        let report = execute_launch(&request, &mut patches, arena, pool).unwrap();
        (patches.outputs().to_vec(), report.outcome, report.timings)
    }
}

pub fn bits(v: &[Vec<f64>]) -> Vec<u64> {
    v.iter().flatten().map(|x| x.to_bits()).collect()
}

/// First differing position of two field sets, if any.
pub fn first_difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<(usize, usize, f64, f64)> {
    for (patch, (x, y)) in a.iter().zip(b).enumerate() {
        for (i, (u, v)) in x.iter().zip(y).enumerate() {
            if u.to_bits() != v.to_bits() {
                return Some((patch, i, *u, *v));
            }
        }
    }
    None
}
