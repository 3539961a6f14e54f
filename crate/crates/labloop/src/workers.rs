//! Order-preserving worker pool.
//!
//! Tasks run on up to `workers` scoped threads; results come back in task
//! order regardless of completion order, so multi-worker runs merge
//! deterministically and a single-worker run is plain sequential execution.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub(crate) fn run_ordered<T, R, F>(tasks: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send + Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let n = tasks.len();
    if n == 0 {
        return Vec::new();
    }
    if workers <= 1 || n == 1 {
        return tasks.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = f(i, &tasks[i]);
                slots.lock().expect("worker slot lock")[i] = Some(result);
            });
        }
    });

    slots
        .into_inner()
        .expect("worker slot lock")
        .into_iter()
        .map(|slot| slot.expect("worker filled every slot"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_task_order() {
        let tasks: Vec<usize> = (0..64).collect();
        let out = run_ordered(tasks.clone(), 4, |_, &t| t * 2);
        assert_eq!(out, tasks.iter().map(|t| t * 2).collect::<Vec<_>>());
    }

    #[test]
    fn single_worker_matches_multi_worker() {
        let tasks: Vec<usize> = (0..33).collect();
        let one = run_ordered(tasks.clone(), 1, |i, &t| (i, t + 1));
        let four = run_ordered(tasks, 4, |i, &t| (i, t + 1));
        assert_eq!(one, four);
    }

    #[test]
    fn empty_input_yields_empty_output() {
        let out: Vec<u8> = run_ordered(Vec::<u8>::new(), 3, |_, &t| t);
        assert!(out.is_empty());
    }
}
