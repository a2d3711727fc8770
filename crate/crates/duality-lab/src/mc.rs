//! Replicate-parallel Monte-Carlo driver. Each replicate gets its own
//! derived RNG stream and results are collected in replicate order, so the
//! output is bit-identical no matter how many workers run.

use crate::stats::Summary;
use crate::stochastic::RngStream;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Map a replicate body over `0..n`, one derived stream per replicate.
pub fn replicate_map<T, F>(stream: RngStream, n: u64, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha12Rng) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream.derive(rep).rng();
            body(rep, &mut rng)
        })
        .collect()
}

/// Scalar-per-replicate convenience wrapper returning a [`Summary`].
pub fn replicate_summary<F>(stream: RngStream, n: u64, body: F) -> Summary
where
    F: Fn(u64, &mut ChaCha12Rng) -> f64 + Sync,
{
    let samples = replicate_map(stream, n, body);
    Summary::from_samples(&samples)
}

/// Run a closure on a dedicated rayon pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool")
        .install(f)
}
