//! Evaluation drivers and the statistics they share.

pub mod attacks;
pub mod montecarlo;
pub mod replay;
pub mod stats;
pub mod sweep;
pub mod synth;

/// Runs `f` on a dedicated pool of `jobs` threads, or on the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool builds")
            .install(f),
        None => f(),
    }
}
