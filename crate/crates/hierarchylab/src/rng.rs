//! Reproducible randomness and draw-parallel execution.
//!
//! Every Monte Carlo draw owns an independent ChaCha8 stream selected by the
//! draw index (the seed picks the key), so a draw's random numbers do not
//! depend on which worker runs it or in what order. Reductions are always
//! performed in draw-index order, which makes pooled estimates bit-identical
//! for any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable capping the number of worker threads used by the
/// command-line tool.
pub const THREADS_ENV: &str = "HIERARCHYLAB_THREADS";

/// The generator for draw `index` under `seed`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Evaluates `f(i)` for i in `range` and returns the results in index order,
/// in parallel when the `parallel` feature is enabled.
pub fn map_indices<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(f).collect()
    }
}
