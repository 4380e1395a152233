//! Data-parallel execution switch.
//!
//! Every batch loop in the crate (perft root splits, Monte Carlo trials,
//! per-item evaluation, match games, bootstrap resamples) goes through
//! [`map_indexed`] or [`map_init_indexed`]. Results always come back in index
//! order, so aggregation is identical whichever executor ran the work. With
//! the `parallel` feature disabled, [`Exec::Parallel`] runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    #[default]
    Sequential,
    /// `jobs == 0` means one worker per available core.
    Parallel { jobs: usize },
}

impl Exec {
    pub fn parallel() -> Exec {
        Exec::Parallel { jobs: 0 }
    }

    /// `--jobs N` semantics: 1 is sequential, anything else a pool of N.
    pub fn from_jobs(jobs: usize) -> Exec {
        if jobs == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel { jobs }
        }
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        Exec::Parallel { jobs } => parallel::map_indexed(jobs, n, f),
    }
}

/// Like [`map_indexed`], with worker-local state built by `init`. Each worker
/// (or the single sequential loop) calls `init` at least once; results must
/// not depend on which state instance served an index.
pub fn map_init_indexed<S, T, I, F>(exec: Exec, n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => {
            let mut state = init();
            (0..n).map(|i| f(&mut state, i)).collect()
        }
        Exec::Parallel { jobs } => parallel::map_init_indexed(jobs, n, init, f),
    }
}

#[cfg(feature = "parallel")]
mod parallel {
    use rayon::prelude::*;

    fn run<R: Send>(jobs: usize, op: impl FnOnce() -> R + Send) -> R {
        if jobs == 0 {
            return op();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }

    pub fn map_indexed<T, F>(jobs: usize, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        run(jobs, || (0..n).into_par_iter().map(f).collect())
    }

    pub fn map_init_indexed<S, T, I, F>(jobs: usize, n: usize, init: I, f: F) -> Vec<T>
    where
        T: Send,
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, usize) -> T + Sync + Send,
    {
        run(jobs, || (0..n).into_par_iter().map_init(init, f).collect())
    }
}

#[cfg(not(feature = "parallel"))]
mod parallel {
    pub fn map_indexed<T, F>(_jobs: usize, n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..n).map(f).collect()
    }

    pub fn map_init_indexed<S, T, I, F>(_jobs: usize, n: usize, init: I, f: F) -> Vec<T>
    where
        I: Fn() -> S,
        F: Fn(&mut S, usize) -> T,
    {
        let mut state = init();
        (0..n).map(|i| f(&mut state, i)).collect()
    }
}

/// Derives an independent child seed. Same `(parent, index)` always gives
/// the same child; used for per-game, per-attempt and per-item streams.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio stride.
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded RNG used throughout; ChaCha keeps streams identical across
/// platforms and releases.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
