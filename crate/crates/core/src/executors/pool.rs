//! Fixed-size worker pool.
//!
//! With the `parallel` feature the pool is a dedicated rayon thread pool.
//! Without it every operation runs on the calling thread in index order,
//! which keeps the observable contract (chunking, waits, graph ordering).

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::kernelgraph::TaskGraph;

/// Chunks handed out per worker and parallel-for.
const CHUNKS_PER_WORKER: usize = 4;

pub struct WorkerPool {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool")
            .field("workers", &self.workers)
            .finish()
    }
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidArgument(
                "a pool needs at least one worker".into(),
            ));
        }
        Ok(Self {
            workers,
            #[cfg(feature = "parallel")]
            pool: rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .thread_name(|i| format!("fvpatch-worker-{i}"))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?,
        })
    }

    /// A pool sized to the available hardware parallelism.
    pub fn with_available_parallelism() -> Result<Self> {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && self.workers > 1
    }

    fn chunks(&self, len: usize) -> impl Iterator<Item = Range<usize>> + Clone + Send {
        let size = len.div_ceil(self.workers * CHUNKS_PER_WORKER).max(1);
        (0..len.div_ceil(size)).map(move |c| c * size..((c + 1) * size).min(len))
    }

    /// Splits `0..len` into contiguous chunks and returns one result per chunk,
    /// in chunk order. Returns after every chunk has finished.
    pub fn map_chunks<R, F>(&self, len: usize, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(Range<usize>) -> Result<R> + Sync + Send,
    {
        let chunks: Vec<Range<usize>> = self.chunks(len).collect();
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.pool
                .install(|| chunks.into_par_iter().map(&f).collect::<Result<Vec<R>>>())
        }
        #[cfg(not(feature = "parallel"))]
        {
            chunks.into_iter().map(f).collect()
        }
    }

    /// One work item per index, results in index order.
    pub fn map_each<R, F>(&self, len: usize, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(usize) -> Result<R> + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.pool
                .install(|| (0..len).into_par_iter().with_max_len(1).map(&f).collect())
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..len).map(f).collect()
        }
    }

    /// Executes every node of `graph` once, each after all its predecessors.
    ///
    /// Returns the largest number of nodes observed running at the same time.
    /// After the first failure no further node bodies run; the first error is
    /// returned once all in-flight nodes finished.
    pub fn run_graph<F>(&self, graph: &TaskGraph, f: F) -> Result<usize>
    where
        F: Fn(usize) -> Result<()> + Sync + Send,
    {
        let order = graph.topological_order()?;
        let tracker = Tracker::default();
        #[cfg(feature = "parallel")]
        {
            if self.workers > 1 {
                return self.run_graph_parallel(graph, &f, tracker);
            }
        }
        for node in order {
            tracker.run(|| f(node))?;
        }
        Ok(tracker.peak.into_inner())
    }

    #[cfg(feature = "parallel")]
    fn run_graph_parallel<F>(&self, graph: &TaskGraph, f: &F, tracker: Tracker) -> Result<usize>
    where
        F: Fn(usize) -> Result<()> + Sync + Send,
    {
        use std::sync::atomic::AtomicBool;
        use std::sync::Mutex;

        struct Shared<'g, F> {
            graph: &'g TaskGraph,
            f: &'g F,
            pending: Vec<AtomicUsize>,
            failed: AtomicBool,
            error: Mutex<Option<Error>>,
            tracker: Tracker,
        }

        fn spawn<'s, F>(scope: &rayon::Scope<'s>, shared: &'s Shared<'s, F>, node: usize)
        where
            F: Fn(usize) -> Result<()> + Sync + Send,
        {
            scope.spawn(move |scope| {
                if !shared.failed.load(Ordering::Acquire) {
                    if let Err(e) = shared.tracker.run(|| (shared.f)(node)) {
                        shared.failed.store(true, Ordering::Release);
                        shared.error.lock().unwrap().get_or_insert(e);
                    }
                }
                for &succ in shared.graph.successors(node) {
                    // AcqRel orders this node's writes before the successor's reads.
                    if shared.pending[succ].fetch_sub(1, Ordering::AcqRel) == 1 {
                        spawn(scope, shared, succ);
                    }
                }
            });
        }

        let shared = Shared {
            graph,
            f,
            pending: (0..graph.node_count())
                .map(|n| AtomicUsize::new(graph.predecessors(n).len()))
                .collect(),
            failed: AtomicBool::new(false),
            error: Mutex::new(None),
            tracker,
        };
        self.pool.scope(|scope| {
            for node in 0..graph.node_count() {
                if graph.predecessors(node).is_empty() {
                    spawn(scope, &shared, node);
                }
            }
        });
        match shared.error.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(shared.tracker.peak.into_inner()),
        }
    }
}

#[derive(Default)]
struct Tracker {
    running: AtomicUsize,
    peak: AtomicUsize,
}

impl Tracker {
    fn run<T>(&self, body: impl FnOnce() -> T) -> T {
        let now = self.running.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let out = body();
        self.running.fetch_sub(1, Ordering::SeqCst);
        out
    }
}
