//! Worker pool for embarrassingly parallel cost evaluations; capped by the
//! `SLIPFLOW_THREADS` environment variable.

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

pub fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("SLIPFLOW_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n >= 1)
        {
            builder = builder.num_threads(n);
        }
        builder.build().expect("failed to build the worker pool")
    })
}
