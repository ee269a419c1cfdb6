//! Wall clock and the threaded job runner.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use capforge_core::training::{CellResult, Clock, Study, TrialRun};

#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        StdClock(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs every job of `study` on up to `jobs` threads. Each job owns its RNG
/// and results are re-sorted before aggregation, so the output does not
/// depend on `jobs`. `on_done` sees each finished trial (from any thread).
pub fn run_study(
    study: &Study<'_>,
    jobs: usize,
    clock: &(dyn Clock + Sync),
    on_done: &(dyn Fn(&TrialRun) + Sync),
) -> capforge_core::Result<Vec<CellResult>> {
    let plan = study.jobs();
    let threads = jobs.clamp(1, plan.len().max(1));
    if threads == 1 {
        let mut runs = Vec::with_capacity(plan.len());
        for job in plan {
            let run = study.run_job(job, clock)?;
            on_done(&run);
            runs.push(run);
        }
        return study.collect(runs);
    }

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let runs = Mutex::new(Vec::with_capacity(plan.len()));
    let first_error = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| {
                while !stop.load(Ordering::Relaxed) {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&job) = plan.get(i) else { break };
                    match study.run_job(job, clock) {
                        Ok(run) => {
                            on_done(&run);
                            runs.lock().unwrap().push((i, run));
                        }
                        Err(e) => {
                            stop.store(true, Ordering::Relaxed);
                            // keep the error of the earliest job for a stable message
                            let mut slot = first_error.lock().unwrap();
                            if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                                *slot = Some((i, e));
                            }
                        }
                    }
                }
            });
        }
    });
    if let Some((_, e)) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let runs = runs.into_inner().unwrap().into_iter().map(|(_, r)| r).collect();
    study.collect(runs)
}
