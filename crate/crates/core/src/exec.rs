//! Execution policy for independent work units.

/// How a batch of independent work units is executed.
///
/// `Parallel` uses the rayon pool when the `parallel` feature is enabled and falls
/// back to sequential execution otherwise. Results are always collected in index
/// order so the two policies produce identical output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => par_map(n, f),
        }
    }
}

/// Runs `f` with at most `threads` workers for [`Exec::Parallel`] batches.
///
/// The result does not depend on `threads`; only wall time does.
#[cfg(feature = "parallel")]
pub fn with_thread_limit<T, F>(threads: usize, f: F) -> crate::Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| crate::Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Sequential build: `threads` is ignored.
#[cfg(not(feature = "parallel"))]
pub fn with_thread_limit<T, F>(_threads: usize, f: F) -> crate::Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    Ok(f())
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
