//! Deterministic work distribution for the embarrassingly parallel runs.
//!
//! Jobs are addressed by index and results are returned in index order, so
//! the reduction is independent of thread scheduling and of how many OS
//! threads actually execute. Each job derives its own noise stream from its
//! index, which is what makes the merge order-independent.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Run `n_jobs` independent jobs on up to `threads` OS threads; results come
/// back in job-index order regardless of completion order.
pub fn run_indexed<T: Send, F: Fn(usize) -> T + Sync>(n_jobs: usize, threads: usize, f: F) -> Vec<T> {
    let threads = threads.max(1).min(n_jobs.max(1));
    if n_jobs == 0 {
        return Vec::new();
    }
    if threads == 1 {
        return (0..n_jobs).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n_jobs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n_jobs {
                    break;
                }
                let out = f(i);
                slots.lock().expect("worker panicked while holding results").insert_at(i, out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked while holding results")
        .into_iter()
        .map(|o| o.expect("job produced no result"))
        .collect()
}

trait InsertAt<T> {
    fn insert_at(&mut self, i: usize, v: T);
}

impl<T> InsertAt<T> for Vec<Option<T>> {
    fn insert_at(&mut self, i: usize, v: T) {
        self[i] = Some(v);
    }
}

/// Even split of `total` work units over `n` lanes (first lanes get the
/// remainder). The split depends only on the arguments.
pub fn unit_counts(total: u64, n: u64) -> Vec<u64> {
    let n = n.max(1);
    let base = total / n;
    let rem = total % n;
    (0..n).map(|i| base + u64::from(i < rem)).collect()
}

/// Default worker count: available parallelism, overridable by caller config.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_in_job_order() {
        let out = run_indexed(57, 4, |i| i * i);
        assert_eq!(out, (0..57).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn single_thread_matches_multi() {
        let a = run_indexed(23, 1, |i| 3 * i + 1);
        let b = run_indexed(23, 8, |i| 3 * i + 1);
        assert_eq!(a, b);
    }

    #[test]
    fn unit_split_conserves_total() {
        let counts = unit_counts(1003, 7);
        assert_eq!(counts.iter().sum::<u64>(), 1003);
        assert_eq!(counts.len(), 7);
        assert!(counts.iter().all(|&c| c == 143 || c == 144));
    }
}
