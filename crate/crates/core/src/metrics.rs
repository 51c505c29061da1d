//! Objectives, lower bounds and the mapping of objective values to search
//! scores in `[0, 1]` (higher is better).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{JobId, JobSet, ModelError, Oracle, Schedule, Time, Timings};
use crate::schedulers::{heuristic_plan, Rule};

pub fn makespan(schedule: &Schedule) -> Time {
    schedule
        .iter()
        .filter_map(|(_, ivs)| ivs.last().map(|iv| iv.end))
        .max()
        .unwrap_or(0)
}

pub fn tardiness(completion: Time, deadline: Time) -> Time {
    (completion - deadline).max(0)
}

fn latenesses<'a>(
    schedule: &'a Schedule,
    jobs: &'a JobSet,
) -> impl Iterator<Item = Result<Time, ModelError>> + 'a {
    schedule.iter().map(move |(j, ivs)| {
        let job = jobs.get(j).ok_or(ModelError::UnknownJob(j))?;
        let d = job.deadline.ok_or(ModelError::MissingDeadline(j))?;
        Ok(ivs.last().map_or(0, |iv| iv.end) - d)
    })
}

/// Largest lateness `c_j - d_j`; `None` for an empty schedule.
pub fn max_lateness(schedule: &Schedule, jobs: &JobSet) -> Result<Option<Time>, ModelError> {
    let mut best = None;
    for l in latenesses(schedule, jobs) {
        let l = l?;
        best = Some(best.map_or(l, |b: Time| b.max(l)));
    }
    Ok(best)
}

pub fn total_lateness(schedule: &Schedule, jobs: &JobSet) -> Result<Time, ModelError> {
    latenesses(schedule, jobs).sum()
}

/// `c_max / |J| + L_max`.
pub fn mixed_score(schedule: &Schedule, jobs: &JobSet) -> Result<f64, ModelError> {
    if schedule.is_empty() {
        return Ok(0.0);
    }
    let l = max_lateness(schedule, jobs)?.unwrap_or(0);
    Ok(mixed_value(makespan(schedule), schedule.len(), l))
}

pub fn mixed_value(makespan: Time, n_jobs: usize, max_lateness: Time) -> f64 {
    makespan as f64 / n_jobs as f64 + max_lateness as f64
}

/// Longest job route versus most loaded machine. Machines in a parallel
/// group share their group's load.
pub fn trivial_lower_bound(jobs: &JobSet) -> Time {
    let longest = jobs.jobs().iter().map(|j| j.total_processing()).max().unwrap_or(0);
    let mut load = vec![0 as Time; jobs.n_machines()];
    for j in jobs.jobs() {
        for s in &j.stages {
            load[s.machine] += s.duration;
        }
    }
    let busiest = jobs
        .groups()
        .map(|(_, members)| {
            let total: Time = members.iter().map(|&m| load[m]).sum();
            let k = members.len() as Time;
            (total + k - 1) / k
        })
        .max()
        .unwrap_or(0);
    longest.max(busiest)
}

/// Lower bound on `L_max`: each job alone, and every single-machine
/// relaxation (deadline shifted by the work left after that machine,
/// sequenced by earliest due date).
pub fn lateness_lower_bound(jobs: &JobSet) -> Result<Time, ModelError> {
    let deadlines = jobs.all_deadlines()?;
    let mut lb = jobs
        .jobs()
        .iter()
        .map(|j| j.total_processing() - deadlines[j.id])
        .max()
        .unwrap_or(0);
    let mut per_machine: Vec<Vec<(Time, Time)>> = vec![Vec::new(); jobs.n_machines()];
    for j in jobs.jobs() {
        let mut tail: Time = j.total_processing();
        for s in &j.stages {
            tail -= s.duration;
            per_machine[s.machine].push((deadlines[j.id] - tail, s.duration));
        }
    }
    for (m, mut ops) in per_machine.into_iter().enumerate() {
        if jobs.interchangeable(m).len() != 1 {
            continue;
        }
        ops.sort_unstable();
        let mut t = 0;
        for (d, p) in ops {
            t += p;
            lb = lb.max(t - d);
        }
    }
    Ok(lb)
}

/// `bound / value` for a minimised objective, clamped to `[0, 1]`.
pub fn normalize_score(value: f64, bound: f64) -> f64 {
    if value <= 0.0 || bound <= 0.0 {
        return if value <= bound { 1.0 } else { 0.0 };
    }
    (bound / value).clamp(0.0, 1.0)
}

/// Score of an objective that may be negative: shifted by a horizon `h`
/// that no reasonable plan exceeds, so `lb` maps to 1 and `h` to 0.
pub fn shifted_score(value: f64, lb: f64, h: f64) -> f64 {
    let span = (h - lb).max(1.0);
    ((h - value) / span).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Makespan,
    MaxLateness,
    TotalLateness,
    Mixed,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Makespan => "makespan",
            Objective::MaxLateness => "lmax",
            Objective::TotalLateness => "total_lateness",
            Objective::Mixed => "mixed",
        })
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "makespan" | "cmax" => Ok(Objective::Makespan),
            "lmax" | "max_lateness" => Ok(Objective::MaxLateness),
            "total_lateness" | "lateness" => Ok(Objective::TotalLateness),
            "mixed" => Ok(Objective::Mixed),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

impl Objective {
    pub fn needs_deadlines(self) -> bool {
        !matches!(self, Objective::Makespan)
    }

    /// Raw objective value of complete timings (lower is better).
    pub fn value(self, timings: &Timings, deadlines: &[Time]) -> f64 {
        let lateness = || timings.completion.iter().zip(deadlines).map(|(c, d)| c - d);
        match self {
            Objective::Makespan => timings.makespan() as f64,
            Objective::MaxLateness => lateness().max().unwrap_or(0) as f64,
            Objective::TotalLateness => lateness().sum::<Time>() as f64,
            Objective::Mixed => mixed_value(
                timings.makespan(),
                timings.completion.len().max(1),
                lateness().max().unwrap_or(0),
            ),
        }
    }
}

/// Maps complete plans to scores in `[0, 1]`. Implementations must be safe
/// to call from several search threads at once.
pub trait Evaluator: Send + Sync {
    fn n_jobs(&self) -> usize;

    fn score(&self, plan: &[JobId]) -> f64;

    /// Raw objective value of a complete plan, lower is better.
    fn objective(&self, plan: &[JobId]) -> f64;

    /// Objective value divided by the reference bound (1.0 = matches it).
    fn ratio(&self, plan: &[JobId]) -> f64;

    /// Jobs in the same class can be swapped in any plan without changing
    /// its score. The default puts every job in a class of its own.
    fn job_classes(&self) -> Vec<usize> {
        (0..self.n_jobs()).collect()
    }
}

/// Reference points used to normalise one objective on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalisation {
    pub objective: Objective,
    /// Best value any plan could reach (a bound or a known optimum).
    pub lower: f64,
    /// Value of a plain random plan, used as the zero point for objectives
    /// that can be negative.
    pub horizon: f64,
    /// Shift making ratios of signed objectives positive.
    pub ratio_offset: f64,
}

impl Normalisation {
    pub fn score(&self, value: f64) -> f64 {
        match self.objective {
            Objective::Makespan => normalize_score(value, self.lower),
            _ => shifted_score(value, self.lower, self.horizon),
        }
    }

    pub fn ratio(&self, value: f64) -> f64 {
        (value + self.ratio_offset) / (self.lower + self.ratio_offset).max(f64::MIN_POSITIVE)
    }
}

/// Runs the oracle and scores its timings.
#[derive(Clone)]
pub struct ScheduleEvaluator {
    jobs: Arc<JobSet>,
    oracle: Arc<dyn Oracle>,
    deadlines: Vec<Time>,
    norm: Normalisation,
}

impl fmt::Debug for ScheduleEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScheduleEvaluator")
            .field("oracle", &self.oracle.name())
            .field("norm", &self.norm)
            .finish()
    }
}

impl ScheduleEvaluator {
    /// Normalises against the trivial bound (makespan) or the lateness
    /// bound (lateness objectives).
    pub fn new(jobs: Arc<JobSet>, oracle: Arc<dyn Oracle>, objective: Objective) -> Result<Self, ModelError> {
        let deadlines = if objective.needs_deadlines() {
            jobs.all_deadlines()?
        } else {
            vec![0; jobs.len()]
        };
        let n = jobs.len().max(1) as f64;
        let max_deadline = deadlines.iter().copied().max().unwrap_or(0) as f64;
        let cmax_lb = trivial_lower_bound(&jobs) as f64;
        let random = heuristic_plan(&jobs, Rule::Random, 0)?;
        let random_cmax = oracle.timings(&jobs, random.as_slice()).makespan() as f64;
        let norm = match objective {
            Objective::Makespan => Normalisation {
                objective,
                lower: cmax_lb,
                horizon: random_cmax,
                ratio_offset: 0.0,
            },
            Objective::MaxLateness => Normalisation {
                objective,
                lower: lateness_lower_bound(&jobs)? as f64,
                horizon: random_cmax,
                ratio_offset: max_deadline,
            },
            Objective::TotalLateness => {
                let lb: Time = jobs
                    .jobs()
                    .iter()
                    .zip(&deadlines)
                    .map(|(j, d)| j.total_processing() - d)
                    .sum();
                Normalisation {
                    objective,
                    lower: lb as f64,
                    horizon: random_cmax * n,
                    ratio_offset: max_deadline * n,
                }
            }
            Objective::Mixed => Normalisation {
                objective,
                lower: cmax_lb / n + lateness_lower_bound(&jobs)? as f64,
                horizon: random_cmax / n + random_cmax,
                ratio_offset: max_deadline,
            },
        };
        Ok(Self { jobs, oracle, deadlines, norm })
    }

    /// Replaces the makespan reference with a known optimum.
    pub fn with_optimum(mut self, optimum: Time) -> Self {
        self.norm.lower = optimum as f64;
        self
    }

    pub fn normalisation(&self) -> &Normalisation {
        &self.norm
    }

    pub fn jobs(&self) -> &Arc<JobSet> {
        &self.jobs
    }

    pub fn oracle(&self) -> &Arc<dyn Oracle> {
        &self.oracle
    }

    pub fn value_of(&self, timings: &Timings) -> f64 {
        self.norm.objective.value(timings, &self.deadlines)
    }
}

impl Evaluator for ScheduleEvaluator {
    fn n_jobs(&self) -> usize {
        self.jobs.len()
    }

    fn score(&self, plan: &[JobId]) -> f64 {
        self.norm.score(self.objective(plan))
    }

    fn objective(&self, plan: &[JobId]) -> f64 {
        self.value_of(&self.oracle.timings(&self.jobs, plan))
    }

    fn ratio(&self, plan: &[JobId]) -> f64 {
        self.norm.ratio(self.objective(plan))
    }

    fn job_classes(&self) -> Vec<usize> {
        self.jobs.job_classes()
    }
}
