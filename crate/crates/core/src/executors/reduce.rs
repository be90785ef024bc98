//! Maximum reductions over per-cell wave speeds.
//!
//! All strategies return the same bits: `max` is exact, associative and
//! commutative. `0` is the neutral element since wave speeds are never
//! negative, and masked-out lanes contribute it.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use super::WorkerPool;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum ReductionStrategy {
    /// Per-group balanced pairwise tree, then a tree over the groups.
    #[default]
    GroupTree,
    /// Every lane updates one shared maximum with compare-and-swap.
    SharedMax,
    /// A single worker loops over all values.
    Serial,
}

impl ReductionStrategy {
    pub const ALL: [ReductionStrategy; 3] = [
        ReductionStrategy::GroupTree,
        ReductionStrategy::SharedMax,
        ReductionStrategy::Serial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReductionStrategy::GroupTree => "tree",
            ReductionStrategy::SharedMax => "shared-max",
            ReductionStrategy::Serial => "serial",
        }
    }
}

impl fmt::Display for ReductionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReductionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown reduction strategy '{s}'")))
    }
}

/// Balanced pairwise maximum; `0` for an empty slice.
pub fn tree_max(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (l, r) = values.split_at(n / 2);
            tree_max(l).max(tree_max(r))
        }
    }
}

/// Lock-free running maximum of non-negative values.
#[derive(Debug, Default)]
pub struct SharedMax(AtomicU64);

impl SharedMax {
    pub fn new() -> Self {
        Self(AtomicU64::new(0.0f64.to_bits()))
    }

    pub fn update(&self, value: f64) {
        let mut current = self.0.load(Ordering::Relaxed);
        while value > f64::from_bits(current) {
            match self.0.compare_exchange_weak(
                current,
                value.to_bits(),
                Ordering::AcqRel,
                Ordering::Relaxed,
            ) {
                Ok(_) => break,
                Err(seen) => current = seen,
            }
        }
    }

    pub fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }
}

/// Maximum of `value(i)` for `i in 0..len` across the pool.
pub(crate) fn reduce_indexed<F>(
    pool: &WorkerPool,
    len: usize,
    strategy: ReductionStrategy,
    value: F,
) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    match strategy {
        ReductionStrategy::GroupTree => {
            let groups = pool.map_chunks(len, |range| {
                let lanes = range.map(&value).collect::<Result<Vec<f64>>>()?;
                Ok(tree_max(&lanes))
            })?;
            Ok(tree_max(&groups))
        }
        ReductionStrategy::SharedMax => {
            let shared = SharedMax::new();
            pool.map_chunks(len, |range| {
                for i in range {
                    shared.update(value(i)?);
                }
                Ok(())
            })?;
            Ok(shared.get())
        }
        ReductionStrategy::Serial => reduce_serial(len, value),
    }
}

/// Same as [`reduce_indexed`] but confined to the calling worker, used for
/// per-patch scopes.
pub(crate) fn reduce_local<F>(len: usize, strategy: ReductionStrategy, value: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64>,
{
    match strategy {
        ReductionStrategy::GroupTree => {
            let lanes = (0..len).map(value).collect::<Result<Vec<f64>>>()?;
            Ok(tree_max(&lanes))
        }
        ReductionStrategy::SharedMax => {
            let shared = SharedMax::new();
            for i in 0..len {
                shared.update(value(i)?);
            }
            Ok(shared.get())
        }
        ReductionStrategy::Serial => reduce_serial(len, value),
    }
}

fn reduce_serial<F>(len: usize, value: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64>,
{
    let mut max = 0.0f64;
    for i in 0..len {
        max = max.max(value(i)?);
    }
    Ok(max)
}

/// Maximum of a value array with the given strategy.
pub fn reduce_max(values: &[f64], strategy: ReductionStrategy, pool: &WorkerPool) -> f64 {
    reduce_indexed(pool, values.len(), strategy, |i| Ok(values[i])).expect("infallible")
}
