//! Execution mode for the data-parallel inner loops.
//!
//! With the `parallel` feature (default) the per-agent phases of an
//! iteration, Monte Carlo trials and seed sweeps are spread over rayon's
//! pool. Without it, or with [`Execution::Sequential`], everything runs on
//! the calling thread. Results are identical in both modes: every random
//! draw comes from a keyed stream and every reduction is performed in index
//! order after the parallel map.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Single-threaded reference mode.
    Sequential,
    /// Use the rayon pool when compiled with the `parallel` feature.
    Parallel,
    /// Parallel only when a batch carries at least [`AUTO_MIN_WORK`] units.
    #[default]
    Auto,
}

/// Below this many scalar operations per batch, thread hand-off costs more
/// than it saves.
pub const AUTO_MIN_WORK: usize = 8192;

impl Execution {
    /// Whether work will actually be distributed.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self != Execution::Sequential
    }

    /// Resolve `Auto` for a batch of the given size.
    pub fn for_work(self, work: usize) -> Execution {
        match self {
            Execution::Auto if work >= AUTO_MIN_WORK => Execution::Parallel,
            Execution::Auto => Execution::Sequential,
            other => other,
        }
    }
}

/// Map `f` over `items` mutably, collecting results in index order.
pub(crate) fn map_mut<T, R, F>(mode: Execution, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items
            .par_iter_mut()
            .enumerate()
            .map(|(i, t)| f(i, t))
            .collect();
    }
    let _ = mode;
    items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map `f` over `0..len`, collecting results in index order.
pub(crate) fn map_range<R, F>(mode: Execution, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}
