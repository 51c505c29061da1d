//! Domain model of the job shop: jobs, machines, plans and schedules.
//!
//! Everything here is immutable once built. Job and machine ids are dense
//! integers `0..n`, so plans and search structures can index arrays directly.
//! Time is measured in integer steps.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type JobId = usize;
pub type MachineId = usize;
pub type Time = i64;

/// Structural problems with the input itself, as opposed to an infeasible
/// schedule (see [`Violation`]).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("job {0} has an empty route")]
    EmptyRoute(JobId),
    #[error("job {job} visits machine {machine} more than once")]
    RepeatedMachine { job: JobId, machine: MachineId },
    #[error("job {job}: processing times do not match the route")]
    ProcTimesMismatch { job: JobId },
    #[error("job {job}: processing time on machine {machine} must be positive")]
    NonPositiveProcTime { job: JobId, machine: MachineId },
    #[error("job ids must be dense 0..n, found {0}")]
    NonDenseJobIds(JobId),
    #[error("machine ids must be dense 0..m, found {0}")]
    NonDenseMachineIds(MachineId),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("unknown machine {0}")]
    UnknownMachine(MachineId),
    #[error("job {0} has a negative deadline")]
    NegativeDeadline(JobId),
    #[error("plan contains job {0} twice")]
    DuplicateInPlan(JobId),
    #[error("plan covers {got} of {expected} jobs")]
    IncompletePlan { got: usize, expected: usize },
    #[error("job {0} has no deadline")]
    MissingDeadline(JobId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Machine {
    pub id: MachineId,
    /// Machines sharing a group are identical and interchangeable.
    pub group: usize,
}

/// One processing step of a job: the machine named by the route and the
/// processing time there. Any machine of the same parallel group may run it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stage {
    pub machine: MachineId,
    pub duration: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub id: JobId,
    pub job_type: u32,
    pub stages: Vec<Stage>,
    pub deadline: Option<Time>,
    pub rack_type: Option<u32>,
}

impl Job {
    pub fn new(
        id: JobId,
        job_type: u32,
        stages: Vec<Stage>,
        deadline: Option<Time>,
        rack_type: Option<u32>,
    ) -> Result<Self, ModelError> {
        if stages.is_empty() {
            return Err(ModelError::EmptyRoute(id));
        }
        let mut seen = HashSet::new();
        for s in &stages {
            if !seen.insert(s.machine) {
                return Err(ModelError::RepeatedMachine {
                    job: id,
                    machine: s.machine,
                });
            }
            if s.duration <= 0 {
                return Err(ModelError::NonPositiveProcTime {
                    job: id,
                    machine: s.machine,
                });
            }
        }
        if matches!(deadline, Some(d) if d < 0) {
            return Err(ModelError::NegativeDeadline(id));
        }
        Ok(Self {
            id,
            job_type,
            stages,
            deadline,
            rack_type,
        })
    }

    /// Sum of processing times over the whole route.
    pub fn total_processing(&self) -> Time {
        self.stages.iter().map(|s| s.duration).sum()
    }

    pub fn max_processing(&self) -> Time {
        self.stages.iter().map(|s| s.duration).max().unwrap_or(0)
    }

    pub fn route(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.stages.iter().map(|s| s.machine)
    }
}

/// Immutable job-shop instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSet {
    jobs: Vec<Job>,
    machines: Vec<Machine>,
    /// group id -> member machines, ascending
    groups: BTreeMap<usize, Vec<MachineId>>,
}

impl JobSet {
    pub fn new(jobs: Vec<Job>, machines: Vec<Machine>) -> Result<Self, ModelError> {
        for (i, m) in machines.iter().enumerate() {
            if m.id != i {
                return Err(ModelError::NonDenseMachineIds(m.id));
            }
        }
        for (i, j) in jobs.iter().enumerate() {
            if j.id != i {
                return Err(ModelError::NonDenseJobIds(j.id));
            }
            for s in &j.stages {
                if s.machine >= machines.len() {
                    return Err(ModelError::UnknownMachine(s.machine));
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<MachineId>> = BTreeMap::new();
        for m in &machines {
            groups.entry(m.group).or_default().push(m.id);
        }
        Ok(Self {
            jobs,
            machines,
            groups,
        })
    }

    /// Shop where every machine is its own group.
    pub fn with_serial_machines(jobs: Vec<Job>, n_machines: usize) -> Result<Self, ModelError> {
        let machines = (0..n_machines).map(|id| Machine { id, group: id }).collect();
        Self::new(jobs, machines)
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn job(&self, id: JobId) -> &Job {
        &self.jobs[id]
    }

    pub fn get(&self, id: JobId) -> Option<&Job> {
        self.jobs.get(id)
    }

    pub fn machines(&self) -> &[Machine] {
        &self.machines
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    pub fn group_of(&self, machine: MachineId) -> usize {
        self.machines[machine].group
    }

    /// Machines able to run a stage routed to `machine`.
    pub fn interchangeable(&self, machine: MachineId) -> &[MachineId] {
        &self.groups[&self.machines[machine].group]
    }

    pub fn groups(&self) -> impl Iterator<Item = (usize, &[MachineId])> {
        self.groups.iter().map(|(g, ms)| (*g, ms.as_slice()))
    }

    pub fn all_deadlines(&self) -> Result<Vec<Time>, ModelError> {
        self.jobs
            .iter()
            .map(|j| j.deadline.ok_or(ModelError::MissingDeadline(j.id)))
            .collect()
    }

    pub fn has_deadlines(&self) -> bool {
        !self.jobs.is_empty() && self.jobs.iter().all(|j| j.deadline.is_some())
    }

    /// Class per job, equal for jobs that differ only in their id. Classes
    /// are numbered by first appearance.
    pub fn job_classes(&self) -> Vec<usize> {
        let mut seen: HashMap<(u32, &[Stage], Option<Time>, Option<u32>), usize> = HashMap::new();
        self.jobs
            .iter()
            .map(|j| {
                let next = seen.len();
                *seen.entry((j.job_type, &j.stages, j.deadline, j.rack_type)).or_insert(next)
            })
            .collect()
    }
}

/// An ordering of job ids, possibly partial.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan(Vec<JobId>);

impl Plan {
    pub fn new(sequence: Vec<JobId>) -> Result<Self, ModelError> {
        let mut seen = HashSet::with_capacity(sequence.len());
        for &j in &sequence {
            if !seen.insert(j) {
                return Err(ModelError::DuplicateInPlan(j));
            }
        }
        Ok(Self(sequence))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn as_slice(&self) -> &[JobId] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<JobId> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_complete(&self, jobs: &JobSet) -> bool {
        self.0.len() == jobs.len() && self.0.iter().all(|&j| j < jobs.len())
    }

    /// Checks that the plan is a permutation of every job in `jobs`.
    pub fn ensure_complete(&self, jobs: &JobSet) -> Result<(), ModelError> {
        if let Some(&bad) = self.0.iter().find(|&&j| j >= jobs.len()) {
            return Err(ModelError::UnknownJob(bad));
        }
        if self.0.len() != jobs.len() {
            return Err(ModelError::IncompletePlan {
                got: self.0.len(),
                expected: jobs.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub machine: MachineId,
    pub start: Time,
    pub end: Time,
}

impl Interval {
    pub fn len(&self) -> Time {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Per-job interval lists, ordered along each job's route.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    assignments: BTreeMap<JobId, Vec<Interval>>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, job: JobId, intervals: Vec<Interval>) {
        self.assignments.insert(job, intervals);
    }

    pub fn intervals(&self, job: JobId) -> Option<&[Interval]> {
        self.assignments.get(&job).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (JobId, &[Interval])> {
        self.assignments.iter().map(|(j, v)| (*j, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn start(&self, job: JobId) -> Option<Time> {
        self.assignments
            .get(&job)
            .and_then(|v| v.first())
            .map(|i| i.start)
    }

    pub fn completion(&self, job: JobId) -> Option<Time> {
        self.assignments
            .get(&job)
            .and_then(|v| v.last())
            .map(|i| i.end)
    }

    pub fn is_complete(&self, jobs: &JobSet) -> bool {
        self.assignments.len() == jobs.len()
    }

    /// Start and completion times of a complete schedule, indexed by job.
    pub fn timings(&self, jobs: &JobSet) -> Timings {
        let mut t = Timings::zeroed(jobs.len());
        for (j, ivs) in &self.assignments {
            if let (Some(first), Some(last)) = (ivs.first(), ivs.last()) {
                t.start[*j] = first.start;
                t.completion[*j] = last.end;
            }
        }
        t
    }
}

/// Start and completion time per job id: everything an evaluator needs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Timings {
    pub start: Vec<Time>,
    pub completion: Vec<Time>,
}

impl Timings {
    pub fn zeroed(n: usize) -> Self {
        Self {
            start: vec![0; n],
            completion: vec![0; n],
        }
    }

    pub fn makespan(&self) -> Time {
        self.completion.iter().copied().max().unwrap_or(0)
    }
}

/// A single feasibility problem found by [`validate_schedule`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MachineOverlap {
        machine: MachineId,
        first: JobId,
        second: JobId,
    },
    JobOverlap {
        job: JobId,
    },
    RouteOrder {
        job: JobId,
        stage: usize,
    },
    WrongMachine {
        job: JobId,
        stage: usize,
        machine: MachineId,
    },
    WrongDuration {
        job: JobId,
        stage: usize,
    },
    StageCount {
        job: JobId,
        expected: usize,
        got: usize,
    },
    NegativeStart {
        job: JobId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Feasibility {
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a schedule against the job-shop rules: no two intervals on one
/// machine overlap, a job's intervals do not overlap and follow its route, and
/// each interval has the job's processing time on a machine able to run it.
pub fn validate_schedule(schedule: &Schedule, jobs: &JobSet) -> Result<Feasibility, ModelError> {
    let mut violations = Vec::new();
    let mut by_machine: BTreeMap<MachineId, Vec<(Interval, JobId)>> = BTreeMap::new();

    for (job_id, ivs) in schedule.iter() {
        let job = jobs.get(job_id).ok_or(ModelError::UnknownJob(job_id))?;
        for iv in ivs {
            if iv.machine >= jobs.n_machines() {
                return Err(ModelError::UnknownMachine(iv.machine));
            }
        }
        if ivs.len() != job.stages.len() {
            violations.push(Violation::StageCount {
                job: job_id,
                expected: job.stages.len(),
                got: ivs.len(),
            });
        }
        if ivs.iter().any(|iv| iv.start < 0) {
            violations.push(Violation::NegativeStart { job: job_id });
        }
        for (k, (iv, stage)) in ivs.iter().zip(&job.stages).enumerate() {
            if jobs.group_of(iv.machine) != jobs.group_of(stage.machine) {
                violations.push(Violation::WrongMachine {
                    job: job_id,
                    stage: k,
                    machine: iv.machine,
                });
            }
            if iv.len() != stage.duration {
                violations.push(Violation::WrongDuration {
                    job: job_id,
                    stage: k,
                });
            }
        }
        for (k, pair) in ivs.windows(2).enumerate() {
            if pair[1].start < pair[0].start {
                violations.push(Violation::RouteOrder {
                    job: job_id,
                    stage: k + 1,
                });
            }
        }
        let mut sorted: Vec<Interval> = ivs.to_vec();
        sorted.sort_by_key(|iv| (iv.start, iv.end));
        if sorted.windows(2).any(|p| p[0].overlaps(&p[1])) {
            violations.push(Violation::JobOverlap { job: job_id });
        }
        for iv in ivs {
            by_machine.entry(iv.machine).or_default().push((*iv, job_id));
        }
    }

    for (machine, mut ivs) in by_machine {
        ivs.sort_by_key(|(iv, j)| (iv.start, iv.end, *j));
        // Sweep keeping the interval reaching furthest right so far.
        let mut reach: Option<(Interval, JobId)> = None;
        for (iv, j) in ivs {
            if iv.is_empty() {
                continue;
            }
            if let Some((prev, pj)) = reach {
                if prev.overlaps(&iv) {
                    violations.push(Violation::MachineOverlap {
                        machine,
                        first: pj,
                        second: j,
                    });
                }
                if iv.end > prev.end {
                    reach = Some((iv, j));
                }
            } else {
                reach = Some((iv, j));
            }
        }
    }

    Ok(Feasibility { violations })
}

/// The black-box scheduler contract: turns a complete plan into a schedule.
pub trait Oracle: Send + Sync {
    fn name(&self) -> &str;

    /// Builds the full schedule. Fails if the plan is not a permutation of
    /// all jobs.
    fn schedule(&self, jobs: &JobSet, plan: &Plan) -> Result<Schedule, ModelError>;

    /// Start/completion times only. `plan` must be complete; this is the hot
    /// path used by the searches and skips validation.
    fn timings(&self, jobs: &JobSet, plan: &[JobId]) -> Timings;
}

/// JSON instance file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub machines: Vec<Machine>,
    pub jobs: Vec<JobRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_optimum: Option<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: JobId,
    #[serde(rename = "type")]
    pub job_type: u32,
    pub route: Vec<MachineId>,
    pub proc_times: BTreeMap<MachineId, Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rack_type: Option<u32>,
}

impl InstanceFile {
    pub fn from_jobs(jobs: &JobSet, known_optimum: Option<Time>) -> Self {
        Self {
            machines: jobs.machines().to_vec(),
            jobs: jobs
                .jobs()
                .iter()
                .map(|j| JobRecord {
                    id: j.id,
                    job_type: j.job_type,
                    route: j.route().collect(),
                    proc_times: j.stages.iter().map(|s| (s.machine, s.duration)).collect(),
                    deadline: j.deadline,
                    rack_type: j.rack_type,
                })
                .collect(),
            known_optimum,
        }
    }

    pub fn to_jobs(&self) -> Result<JobSet, ModelError> {
        let mut jobs = Vec::with_capacity(self.jobs.len());
        for r in &self.jobs {
            if r.proc_times.len() != r.route.len() {
                return Err(ModelError::ProcTimesMismatch { job: r.id });
            }
            let stages = r
                .route
                .iter()
                .map(|m| {
                    r.proc_times
                        .get(m)
                        .map(|&duration| Stage {
                            machine: *m,
                            duration,
                        })
                        .ok_or(ModelError::ProcTimesMismatch { job: r.id })
                })
                .collect::<Result<Vec<_>, _>>()?;
            jobs.push(Job::new(r.id, r.job_type, stages, r.deadline, r.rack_type)?);
        }
        jobs.sort_by_key(|j| j.id);
        let mut machines = self.machines.clone();
        machines.sort_by_key(|m| m.id);
        JobSet::new(jobs, machines)
    }
}

/// Writes a schedule as CSV with columns `job_id,machine,start,end`.
pub fn schedule_to_csv(schedule: &Schedule) -> String {
    let mut out = String::from("job_id,machine,start,end\n");
    for (j, ivs) in schedule.iter() {
        for iv in ivs {
            out.push_str(&format!("{},{},{},{}\n", j, iv.machine, iv.start, iv.end));
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The three-job, three-machine shop drawn as the introductory Gantt
    /// example: j1 and j2 visit m1,m2,m3; j3 visits m1,m3.
    pub fn toy_shop() -> JobSet {
        let st = |m, d| Stage {
            machine: m,
            duration: d,
        };
        let jobs = vec![
            Job::new(0, 0, vec![st(0, 4), st(1, 2), st(2, 1)], None, None).unwrap(),
            Job::new(1, 0, vec![st(0, 1), st(1, 4), st(2, 4)], None, None).unwrap(),
            Job::new(2, 1, vec![st(0, 1), st(2, 3)], None, None).unwrap(),
        ];
        JobSet::with_serial_machines(jobs, 3).unwrap()
    }

    /// The feasible schedule of the toy shop, makespan 14.
    pub fn toy_schedule() -> Schedule {
        let iv = |machine, start, end| Interval {
            machine,
            start,
            end,
        };
        let mut s = Schedule::new();
        s.insert(0, vec![iv(0, 0, 4), iv(1, 4, 6), iv(2, 6, 7)]);
        s.insert(1, vec![iv(0, 5, 6), iv(1, 6, 10), iv(2, 10, 14)]);
        s.insert(2, vec![iv(0, 6, 7), iv(2, 7, 10)]);
        s
    }
}
