//! Multi-threaded population evaluation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use preig_core::pbt::{Candidate, CandidateLog, Evaluator, TrainingSetup};

/// Environment variable capping the number of evaluation threads.
pub const THREADS_ENV: &str = "PREIG_THREADS";

/// Evaluates candidates on up to `threads` scoped worker threads. Results are
/// stored by candidate index, so output does not depend on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedEvaluator {
    pub threads: usize,
}

impl ThreadedEvaluator {
    pub fn new(threads: usize) -> Self {
        Self { threads: threads.max(1) }
    }

    /// Available parallelism, capped by `PREIG_THREADS` when it parses as a
    /// positive integer.
    pub fn from_env() -> Self {
        let hw = thread::available_parallelism().map_or(1, |n| n.get());
        let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
        Self::new(cap.map_or(hw, |c| c.min(hw)))
    }
}

impl Evaluator for ThreadedEvaluator {
    fn evaluate_population(
        &self,
        setup: &TrainingSetup<'_>,
        generation: usize,
        population: Vec<Candidate>,
    ) -> Vec<(Candidate, CandidateLog)> {
        let n = population.len();
        let workers = self.threads.min(n);
        if workers <= 1 {
            return population.into_iter().enumerate().map(|(i, c)| setup.evaluate(generation, i, c)).collect();
        }
        let inputs: Vec<Mutex<Option<Candidate>>> = population.into_iter().map(|c| Mutex::new(Some(c))).collect();
        let outputs: Vec<Mutex<Option<(Candidate, CandidateLog)>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let cand = inputs[i].lock().expect("input slot").take().expect("each slot taken once");
                    let result = setup.evaluate(generation, i, cand);
                    *outputs[i].lock().expect("output slot") = Some(result);
                });
            }
        });
        outputs.into_iter().map(|m| m.into_inner().expect("output slot").expect("every slot filled")).collect()
    }
}
