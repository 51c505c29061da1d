#![allow(dead_code)]

use std::sync::Arc;

use bbplan_core::metrics::{Evaluator, Objective, ScheduleEvaluator};
use bbplan_core::schedulers::{OfflineDispatcher, OnlineDispatcher};
use bbplan_core::{Job, JobId, JobSet, Oracle, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random shop: up to `max_machines` machines, each job visits a
/// random subset of them in random order.
pub fn random_shop(seed: u64, n_jobs: usize, max_machines: usize) -> JobSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=max_machines);
    let jobs = (0..n_jobs)
        .map(|id| {
            let mut machines: Vec<usize> = (0..m).collect();
            rand::seq::SliceRandom::shuffle(&mut machines[..], &mut rng);
            machines.truncate(rng.gen_range(1..=m));
            let stages = machines.iter().map(|&machine| Stage { machine, duration: rng.gen_range(1..=9) }).collect();
            let deadline = rng.gen_range(5..40);
            Job::new(id, rng.gen_range(0..3), stages, Some(deadline), None).unwrap()
        })
        .collect();
    JobSet::with_serial_machines(jobs, m).unwrap()
}

pub fn evaluator(jobs: &JobSet, online: bool, objective: Objective) -> ScheduleEvaluator {
    let oracle: Arc<dyn Oracle> = if online { Arc::new(OnlineDispatcher) } else { Arc::new(OfflineDispatcher) };
    ScheduleEvaluator::new(Arc::new(jobs.clone()), oracle, objective).unwrap()
}

pub fn permutations(n: usize) -> Vec<Vec<JobId>> {
    let mut out = Vec::new();
    let mut p: Vec<JobId> = (0..n).collect();
    heap(n, &mut p, &mut out);
    out
}

fn heap(k: usize, p: &mut Vec<JobId>, out: &mut Vec<Vec<JobId>>) {
    if k <= 1 {
        out.push(p.clone());
        return;
    }
    for i in 0..k {
        heap(k - 1, p, out);
        let j = if k % 2 == 0 { i } else { 0 };
        p.swap(j, k - 1);
    }
}

/// Lowest objective value over all plans.
pub fn brute_force_best(ev: &dyn Evaluator) -> f64 {
    permutations(ev.n_jobs()).iter().map(|p| ev.objective(p)).fold(f64::INFINITY, f64::min)
}
