//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature off, every helper runs on the calling thread.
//! Results are always returned in input order, so output never depends on
//! how work was scheduled.

use crate::error::{Error, Result};

/// Caps the number of worker threads used by sweeps.
pub const THREADS_ENV: &str = "VPONSIM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// Reads the thread cap from the environment. Unset or empty means no cap.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(
                THREADS_ENV,
                format!("expected a positive integer, got {v:?}"),
            )),
        },
        Err(_) => Ok(None),
    }
}

/// Maps `f` over `items`, in parallel when enabled and requested.
pub fn par_map<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = mode;
    items.iter().map(f).collect()
}

/// Runs two closures, concurrently when enabled and requested.
pub fn join<A, B, RA, RB>(mode: ExecMode, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return rayon::join(a, b);
    }
    #[cfg(not(feature = "parallel"))]
    let _ = mode;
    (a(), b())
}

/// Runs `f` inside a pool of at most `threads` workers. `None` uses the
/// global pool.
pub fn with_thread_cap<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
        return Ok(pool.install(f));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(f())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..200).collect();
        let seq = par_map(&xs, ExecMode::Sequential, |x| x * x);
        let par = with_thread_cap(Some(3), || par_map(&xs, ExecMode::Parallel, |x| x * x)).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn join_returns_both() {
        assert_eq!(join(ExecMode::Parallel, || 1, || "b"), (1, "b"));
    }
}
