//! Black-box dispatchers (the oracles whose output the searches optimise)
//! and the classic plan-producing baseline rules.
//!
//! Both dispatchers take jobs strictly in plan order and never look ahead.
//! They differ in what they may do with time that already passed:
//!
//! * [`OnlineDispatcher`] runs the shop while it plans. One new job enters the
//!   line per time step (a job starts at least one step after its
//!   predecessor in the plan) and every operation is appended behind the
//!   work already placed on its machine.
//! * [`OfflineDispatcher`] builds the whole timetable before execution, so an
//!   operation may drop into an idle gap left earlier on its machine.
//!
//! Within a parallel machine group the machine offering the earliest start is
//! used; ties go to the lowest machine id.

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    Interval, JobId, JobSet, MachineId, ModelError, Oracle, Plan, Schedule, Time, Timings,
};

/// Receives every placed operation: `(job, stage index, interval)`.
trait Sink {
    fn place(&mut self, job: JobId, stage: usize, iv: Interval);
}

struct TimingSink(Timings);

impl Sink for TimingSink {
    fn place(&mut self, job: JobId, stage: usize, iv: Interval) {
        if stage == 0 {
            self.0.start[job] = iv.start;
        }
        // stages are placed in route order, so the last one wins
        self.0.completion[job] = iv.end;
    }
}

struct ScheduleSink {
    schedule: Schedule,
    current: Vec<Interval>,
    current_job: Option<JobId>,
}

impl ScheduleSink {
    fn new() -> Self {
        Self {
            schedule: Schedule::new(),
            current: Vec::new(),
            current_job: None,
        }
    }

    fn flush(&mut self) {
        if let Some(j) = self.current_job.take() {
            self.schedule.insert(j, std::mem::take(&mut self.current));
        }
    }

    fn finish(mut self) -> Schedule {
        self.flush();
        self.schedule
    }
}

impl Sink for ScheduleSink {
    fn place(&mut self, job: JobId, _stage: usize, iv: Interval) {
        if self.current_job != Some(job) {
            self.flush();
            self.current_job = Some(job);
        }
        self.current.push(iv);
    }
}

/// Append-only placement. Returns nothing; results go through the sink.
fn run_online(jobs: &JobSet, plan: &[JobId], sink: &mut impl Sink) {
    let mut frontier: Vec<Time> = vec![0; jobs.n_machines()];
    let mut prev_start: Option<Time> = None;
    for &j in plan {
        let job = jobs.job(j);
        let mut ready = prev_start.map_or(0, |s| s + 1);
        for (k, stage) in job.stages.iter().enumerate() {
            let (m, start) = earliest_frontier(jobs.interchangeable(stage.machine), &frontier, ready);
            let end = start + stage.duration;
            frontier[m] = end;
            if k == 0 {
                prev_start = Some(start);
            }
            sink.place(j, k, Interval { machine: m, start, end });
            ready = end;
        }
    }
}

pub(crate) fn earliest_frontier(candidates: &[MachineId], frontier: &[Time], ready: Time) -> (MachineId, Time) {
    let mut best = (candidates[0], ready.max(frontier[candidates[0]]));
    for &m in &candidates[1..] {
        let s = ready.max(frontier[m]);
        if s < best.1 {
            best = (m, s);
        }
    }
    best
}

/// Earliest start `>= ready` of an operation of length `dur` on a machine
/// whose busy intervals are `busy` (sorted, disjoint), and the insert index.
fn earliest_gap(busy: &[(Time, Time)], ready: Time, dur: Time) -> (Time, usize) {
    let mut idx = busy.partition_point(|&(_, end)| end <= ready);
    let mut t = ready;
    while idx < busy.len() {
        let (s, e) = busy[idx];
        if s >= t + dur {
            break;
        }
        t = t.max(e);
        idx += 1;
    }
    (t, idx)
}

/// Gap-filling placement.
fn run_offline(jobs: &JobSet, plan: &[JobId], sink: &mut impl Sink) {
    let mut busy: Vec<Vec<(Time, Time)>> = vec![Vec::new(); jobs.n_machines()];
    for &j in plan {
        let job = jobs.job(j);
        let mut ready = 0;
        for (k, stage) in job.stages.iter().enumerate() {
            let mut best: Option<(MachineId, Time, usize)> = None;
            for &m in jobs.interchangeable(stage.machine) {
                let (t, idx) = earliest_gap(&busy[m], ready, stage.duration);
                if best.map_or(true, |(_, bt, _)| t < bt) {
                    best = Some((m, t, idx));
                }
            }
            let (m, start, idx) = best.expect("machine groups are never empty");
            let end = start + stage.duration;
            busy[m].insert(idx, (start, end));
            sink.place(j, k, Interval { machine: m, start, end });
            ready = end;
        }
    }
}

/// On-line dispatching: jobs enter one per time step in plan order and are
/// started as soon as a machine is free; placed work is never moved.
#[derive(Debug, Clone, Copy, Default)]
pub struct OnlineDispatcher;

/// Off-line dispatching: later jobs may be slotted into earlier idle gaps.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineDispatcher;

impl Oracle for OnlineDispatcher {
    fn name(&self) -> &str {
        "online"
    }

    fn schedule(&self, jobs: &JobSet, plan: &Plan) -> Result<Schedule, ModelError> {
        plan.ensure_complete(jobs)?;
        let mut sink = ScheduleSink::new();
        run_online(jobs, plan.as_slice(), &mut sink);
        Ok(sink.finish())
    }

    fn timings(&self, jobs: &JobSet, plan: &[JobId]) -> Timings {
        let mut sink = TimingSink(Timings::zeroed(jobs.len()));
        run_online(jobs, plan, &mut sink);
        sink.0
    }
}

impl Oracle for OfflineDispatcher {
    fn name(&self) -> &str {
        "offline"
    }

    fn schedule(&self, jobs: &JobSet, plan: &Plan) -> Result<Schedule, ModelError> {
        plan.ensure_complete(jobs)?;
        let mut sink = ScheduleSink::new();
        run_offline(jobs, plan.as_slice(), &mut sink);
        Ok(sink.finish())
    }

    fn timings(&self, jobs: &JobSet, plan: &[JobId]) -> Timings {
        let mut sink = TimingSink(Timings::zeroed(jobs.len()));
        run_offline(jobs, plan, &mut sink);
        sink.0
    }
}

pub fn online_dispatch(plan: &Plan, jobs: &JobSet) -> Result<Schedule, ModelError> {
    OnlineDispatcher.schedule(jobs, plan)
}

pub fn offline_dispatch(plan: &Plan, jobs: &JobSet) -> Result<Schedule, ModelError> {
    OfflineDispatcher.schedule(jobs, plan)
}

/// Baseline ordering rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Spt,
    Lpt,
    Edd,
    Random,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Spt => "spt",
            Rule::Lpt => "lpt",
            Rule::Edd => "edd",
            Rule::Random => "random",
        };
        f.write_str(s)
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spt" => Ok(Rule::Spt),
            "lpt" => Ok(Rule::Lpt),
            "edd" => Ok(Rule::Edd),
            "random" => Ok(Rule::Random),
            other => Err(format!("unknown rule `{other}`")),
        }
    }
}

/// Orders jobs by a dispatching rule. Ties keep ascending job id.
pub fn heuristic_plan(jobs: &JobSet, rule: Rule, seed: u64) -> Result<Plan, ModelError> {
    let mut ids: Vec<JobId> = (0..jobs.len()).collect();
    match rule {
        Rule::Spt => ids.sort_by_key(|&j| jobs.job(j).total_processing()),
        Rule::Lpt => ids.sort_by_key(|&j| Reverse(jobs.job(j).total_processing())),
        Rule::Edd => {
            let deadlines = jobs.all_deadlines()?;
            ids.sort_by_key(|&j| deadlines[j]);
        }
        Rule::Random => ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
    }
    Plan::new(ids)
}
