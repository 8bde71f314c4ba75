//! Fan-out of independent per-seed jobs over a small thread pool. Results
//! come back in input order, so the worker count never changes outputs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const WORKERS_ENV: &str = "PROTOREC_WORKERS";

/// Worker count from the environment, at least 1.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

pub fn run_ordered<I: Sync, T: Send>(items: &[I], workers: usize, job: impl Fn(&I) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let out = job(&items[i]);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|x| x.expect("every job ran")).collect()
}
