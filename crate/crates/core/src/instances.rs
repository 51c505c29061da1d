//! Benchmark instance generators.
//!
//! Problem 1 is a synthetic shop with three identical parallel machines and
//! three job types of length 2, 3 and 4 whose optimum is known by
//! construction. Problem 2 is a random job shop in the Demirkol style where
//! every job visits every machine once.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics::trivial_lower_bound;
use crate::model::{Job, JobId, JobSet, Machine, ModelError, Oracle, Plan, Stage, Time};
use crate::schedulers::OnlineDispatcher;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("instance needs at least one job")]
    NoJobs,
    #[error("{0} jobs cannot be split 7:7:6 into whole job types")]
    IndivisibleJobCount(usize),
    #[error("instance needs at least one machine")]
    NoMachines,
    #[error("due-date factors must be finite and non-negative (T={t}, R={r})")]
    BadDueDateFactors { t: f64, r: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Processing time of each Problem 1 job type (a, b, c).
pub const PROBLEM1_DURATIONS: [Time; 3] = [2, 3, 4];

/// Problem 1 instance with its best constructed plan.
#[derive(Debug, Clone)]
pub struct Problem1 {
    pub jobs: JobSet,
    pub counts: [usize; 3],
    /// Makespan of `optimal_plan` under the on-line dispatcher.
    pub optimum: Time,
    pub optimal_plan: Plan,
    /// Lower bound on any on-line plan: machine load spread over the three
    /// machines, and the entry gate pushing the last job to time n-1.
    pub lower_bound: Time,
}

impl Problem1 {
    /// True when the constructed plan provably meets the lower bound.
    pub fn optimum_is_proven(&self) -> bool {
        self.optimum == self.lower_bound
    }
}

/// Problem 1 with `n_jobs` jobs split 7:7:6 over the types a, b, c
/// (2000 jobs gives the full 700/700/600 instance).
pub fn gen_problem1(n_jobs: usize) -> Result<Problem1, InstanceError> {
    if n_jobs == 0 {
        return Err(InstanceError::NoJobs);
    }
    if (n_jobs * 7) % 20 != 0 || (n_jobs * 6) % 20 != 0 {
        return Err(InstanceError::IndivisibleJobCount(n_jobs));
    }
    let a = n_jobs * 7 / 20;
    problem1_with_counts([a, a, n_jobs - 2 * a])
}

/// Problem 1 with explicit per-type counts.
pub fn problem1_with_counts(counts: [usize; 3]) -> Result<Problem1, InstanceError> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(InstanceError::NoJobs);
    }
    let mut jobs = Vec::with_capacity(n);
    for (ty, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let id = jobs.len();
            let stage = Stage { machine: 0, duration: PROBLEM1_DURATIONS[ty] };
            jobs.push(Job::new(id, ty as u32, vec![stage], None, None)?);
        }
    }
    let machines = (0..3).map(|id| Machine { id, group: 0 }).collect();
    let jobs = JobSet::new(jobs, machines)?;

    let (optimal_plan, optimum) = constructed_plans(&counts)
        .into_iter()
        .map(|p| {
            let ms = OnlineDispatcher.timings(&jobs, &p).makespan();
            (p, ms)
        })
        .min_by_key(|(_, ms)| *ms)
        .expect("at least one constructed plan");

    let load: Time = counts.iter().zip(PROBLEM1_DURATIONS).map(|(&c, d)| c as Time * d).sum();
    let shortest = counts
        .iter()
        .zip(PROBLEM1_DURATIONS)
        .filter(|(&c, _)| c > 0)
        .map(|(_, d)| d)
        .min()
        .unwrap_or(0);
    let lower_bound = ((load + 2) / 3).max(n as Time - 1 + shortest);

    Ok(Problem1 {
        jobs,
        counts,
        optimum,
        optimal_plan: Plan::new(optimal_plan).expect("constructed plans are permutations"),
        lower_bound,
    })
}

/// Interleaves c, a, b while all three types remain, then appends the
/// leftovers in both possible orders.
fn constructed_plans(counts: &[usize; 3]) -> Vec<Vec<JobId>> {
    let first = |ty: usize| -> usize { counts[..ty].iter().sum() };
    let mut next = [first(0), first(1), first(2)];
    let end = [first(1), first(2), first(3)];
    let mut cycle = Vec::new();
    while (0..3).all(|t| next[t] < end[t]) {
        for t in [2, 0, 1] {
            cycle.push(next[t]);
            next[t] += 1;
        }
    }
    let mut plans = Vec::new();
    for order in [[0, 1, 2], [1, 0, 2], [2, 0, 1], [2, 1, 0]] {
        let mut p = cycle.clone();
        for t in order {
            p.extend(next[t]..end[t]);
        }
        if !plans.contains(&p) {
            plans.push(p);
        }
    }
    plans
}

/// Window from which Demirkol-style deadlines are drawn for trivial bound `mu`.
pub fn deadline_window(mu: f64, t: f64, r: f64) -> (f64, f64) {
    (mu * (1.0 - t - r / 2.0), mu * (1.0 - t + r / 2.0))
}

/// Random job shop: every job visits all machines in a random order,
/// processing times uniform on [1, 200], deadlines uniform on the
/// [`deadline_window`] of the instance's trivial lower bound.
pub fn gen_demirkol(
    n_jobs: usize,
    n_machines: usize,
    seed: u64,
    t: f64,
    r: f64,
) -> Result<JobSet, InstanceError> {
    if n_jobs == 0 {
        return Err(InstanceError::NoJobs);
    }
    if n_machines == 0 {
        return Err(InstanceError::NoMachines);
    }
    if !(t.is_finite() && r.is_finite() && t >= 0.0 && r >= 0.0) {
        return Err(InstanceError::BadDueDateFactors { t, r });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut routes = Vec::with_capacity(n_jobs);
    for _ in 0..n_jobs {
        let mut route: Vec<usize> = (0..n_machines).collect();
        route.shuffle(&mut rng);
        let stages: Vec<Stage> = route
            .into_iter()
            .map(|machine| Stage { machine, duration: rng.gen_range(1..=200) })
            .collect();
        routes.push(stages);
    }
    let undated: Vec<Job> = routes
        .iter()
        .enumerate()
        .map(|(id, s)| Job::new(id, 0, s.clone(), None, None))
        .collect::<Result<_, _>>()?;
    let mu = trivial_lower_bound(&JobSet::with_serial_machines(undated, n_machines)?) as f64;
    let (lo, hi) = deadline_window(mu, t, r);
    let lo = (lo.ceil() as Time).max(0);
    let hi = (hi.floor() as Time).max(lo);

    let jobs = routes
        .into_iter()
        .enumerate()
        .map(|(id, stages)| {
            let d = rng.gen_range(lo..=hi);
            Job::new(id, 0, stages, Some(d), None)
        })
        .collect::<Result<_, _>>()?;
    Ok(JobSet::with_serial_machines(jobs, n_machines)?)
}
