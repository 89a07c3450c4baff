//! Order-preserving map that runs on rayon when the `parallel` feature is on
//! and the caller asks for it, and sequentially otherwise.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn map_ordered<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Whether parallel evaluation is compiled in.
pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");
