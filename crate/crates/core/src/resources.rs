//! Job shop with external resources: every job travels on a carrier that
//! holds a rack of the job's rack type, and jobs are loaded onto their racks
//! in a loading area that completes only a few loads per time interval.
//!
//! [`ResourceDispatcher`] is an on-line dispatcher built on the same rules
//! as [`OnlineDispatcher`](crate::schedulers::OnlineDispatcher): jobs enter in
//! plan order, placed work never moves, and a job additionally waits until
//! a carrier with a suitable rack is free and the loading area admits it.
//! With no resource limits it produces exactly the on-line schedule.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Interval, Job, JobId, JobSet, Machine, ModelError, Oracle, Plan, Schedule, Stage, Time, Timings};
use crate::schedulers::earliest_frontier;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResourceError {
    #[error("job {job} needs rack type {rack_type}, which the pool does not have")]
    Unschedulable { job: JobId, rack_type: u32 },
    #[error("job {0} has no rack type but the pool limits racks")]
    MissingRackType(JobId),
    #[error("the pool has no carriers")]
    NoCarriers,
    #[error("loading area needs at least one station, one load per interval and a positive interval")]
    BadLoadingArea,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Loading stations with a shared limit on completed loads per interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadingArea {
    pub stations: usize,
    pub loads_per_interval: usize,
    /// Length of one interval in time steps.
    pub interval: Time,
}

impl Default for LoadingArea {
    fn default() -> Self {
        Self { stations: 6, loads_per_interval: 2, interval: 10 }
    }
}

impl LoadingArea {
    /// Station a job is loaded at: processes are spread over the stations.
    pub fn station_of(&self, job: &Job) -> usize {
        job.job_type as usize % self.stations
    }
}

/// External resources. `None` counts mean unlimited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcePool {
    pub racks: Option<BTreeMap<u32, usize>>,
    pub carriers: Option<usize>,
    /// Steps needed to swap the rack mounted on a carrier.
    pub rack_change: Time,
    pub loading: Option<LoadingArea>,
}

impl ResourcePool {
    pub fn unlimited() -> Self {
        Self { racks: None, carriers: None, rack_change: 10, loading: None }
    }

    pub fn new(racks: BTreeMap<u32, usize>, carriers: usize) -> Self {
        Self { racks: Some(racks), carriers: Some(carriers), rack_change: 10, loading: Some(LoadingArea::default()) }
    }

    pub fn without_loading(mut self) -> Self {
        self.loading = None;
        self
    }

    /// Checks that every job can eventually be served.
    pub fn check(&self, jobs: &JobSet) -> Result<(), ResourceError> {
        if self.carriers == Some(0) {
            return Err(ResourceError::NoCarriers);
        }
        if let Some(l) = self.loading {
            if l.stations == 0 || l.stations > 64 || l.loads_per_interval == 0 || l.interval <= 0 {
                return Err(ResourceError::BadLoadingArea);
            }
        }
        if let Some(racks) = &self.racks {
            for j in jobs.jobs() {
                let r = j.rack_type.ok_or(ResourceError::MissingRackType(j.id))?;
                if racks.get(&r).copied().unwrap_or(0) == 0 {
                    return Err(ResourceError::Unschedulable { job: j.id, rack_type: r });
                }
            }
        }
        Ok(())
    }
}

/// Memoised loading decisions. A query is the set of stations that already
/// completed a load in the interval, the stations asking to load, and the
/// station the polling order starts from; the answer is the set admitted.
#[derive(Debug)]
pub struct LoadingTable {
    area: LoadingArea,
    table: RwLock<HashMap<(u64, u64, usize), u64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Clone for LoadingTable {
    fn clone(&self) -> Self {
        Self {
            area: self.area,
            table: RwLock::new(self.table.read().clone()),
            hits: AtomicU64::new(self.hits()),
            misses: AtomicU64::new(self.misses()),
        }
    }
}

impl LoadingTable {
    pub fn new(area: LoadingArea) -> Self {
        Self { area, table: RwLock::new(HashMap::new()), hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn area(&self) -> LoadingArea {
        self.area
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Stations admitted this interval, as a bit mask.
    pub fn admit(&self, loaded: u64, requests: u64, poll_from: usize) -> u64 {
        let key = (loaded, requests, poll_from % self.area.stations);
        if let Some(&v) = self.table.read().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return v;
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = self.poll(loaded, requests, key.2);
        self.table.write().insert(key, v);
        v
    }

    fn poll(&self, loaded: u64, requests: u64, from: usize) -> u64 {
        let n = self.area.stations;
        let mut room = self.area.loads_per_interval.saturating_sub(loaded.count_ones() as usize);
        let mut admitted = 0;
        for k in 0..n {
            let s = (from + k) % n;
            let bit = 1u64 << s;
            if room == 0 {
                break;
            }
            if requests & bit != 0 && loaded & bit == 0 {
                admitted |= bit;
                room -= 1;
            }
        }
        admitted
    }

    /// Which of the ready stations load during the next interval.
    pub fn simulate_loading(&self, ready: &[bool]) -> Vec<usize> {
        let requests = ready.iter().enumerate().filter(|(_, &r)| r).fold(0u64, |m, (i, _)| m | 1 << i);
        let admitted = self.admit(0, requests, 0);
        (0..ready.len()).filter(|&s| admitted & (1 << s) != 0).collect()
    }
}

/// One line of the resource log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub job_id: JobId,
    pub process: u32,
    pub carrier: Option<usize>,
    /// Rack as (type, index within the type).
    pub rack: Option<(u32, usize)>,
    pub deadline: Option<Time>,
    /// When the job takes its carrier (before a rack change, if any).
    pub start: Time,
    pub completion: Time,
    pub rack_change: bool,
    /// Interval in which the job was loaded.
    pub loaded_in: Option<Time>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResourceLog {
    pub entries: Vec<LogEntry>,
}

impl ResourceLog {
    /// CSV with columns `job_id,process,carrier,rack,d_j,s_j,c_j`; unlimited
    /// resources and missing deadlines are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("job_id,process,carrier,rack,d_j,s_j,c_j\n");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.job_id,
                e.process,
                opt(e.carrier.map(|c| c.to_string())),
                opt(e.rack.map(|(t, i)| format!("{t}-{i}"))),
                opt(e.deadline.map(|d| d.to_string())),
                e.start,
                e.completion
            ));
        }
        out
    }

    /// Sweeps the log and reports every way it breaks the pool's limits.
    pub fn violations(&self, pool: &ResourcePool) -> Vec<String> {
        let mut out = Vec::new();
        let spans = |key: &dyn Fn(&LogEntry) -> Option<String>| {
            let mut by: BTreeMap<String, Vec<(Time, Time)>> = BTreeMap::new();
            for e in &self.entries {
                if let Some(k) = key(e) {
                    by.entry(k).or_default().push((e.start, e.completion));
                }
            }
            by
        };
        let peak = |mut iv: Vec<(Time, Time)>| {
            let mut events: Vec<(Time, i64)> = Vec::new();
            for (s, e) in iv.drain(..) {
                events.push((s, 1));
                events.push((e, -1));
            }
            // releases before acquisitions at the same instant
            events.sort();
            let (mut cur, mut max) = (0i64, 0i64);
            for (_, d) in events {
                cur += d;
                max = max.max(cur);
            }
            max as usize
        };
        if let Some(limit) = pool.carriers {
            let all: Vec<(Time, Time)> = self.entries.iter().map(|e| (e.start, e.completion)).collect();
            let p = peak(all);
            if p > limit {
                out.push(format!("{p} carriers in use, pool has {limit}"));
            }
        }
        if let Some(racks) = &pool.racks {
            for (t, iv) in spans(&|e| e.rack.map(|(t, _)| t.to_string())) {
                let limit = racks.get(&t.parse().expect("numeric type")).copied().unwrap_or(0);
                let p = peak(iv);
                if p > limit {
                    out.push(format!("{p} racks of type {t} in use, pool has {limit}"));
                }
            }
        }
        for (what, key) in [
            ("carrier", &(|e: &LogEntry| e.carrier.map(|c| c.to_string())) as &dyn Fn(&LogEntry) -> Option<String>),
            ("rack", &|e: &LogEntry| e.rack.map(|(t, i)| format!("{t}-{i}"))),
        ] {
            for (k, iv) in spans(key) {
                if peak(iv) > 1 {
                    out.push(format!("{what} {k} holds two jobs at once"));
                }
            }
        }
        if let Some(area) = pool.loading {
            let mut per: BTreeMap<Time, usize> = BTreeMap::new();
            for e in &self.entries {
                if let Some(k) = e.loaded_in {
                    *per.entry(k).or_default() += 1;
                }
            }
            for (k, c) in per {
                if c > area.loads_per_interval {
                    out.push(format!("{c} loads in interval {k}, limit {}", area.loads_per_interval));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Carrier {
    mounted: Option<(u32, usize)>,
    busy_until: Time,
}

/// Rack and carrier bookkeeping while jobs are placed.
struct Fleet<'a> {
    pool: &'a ResourcePool,
    carriers: Vec<Carrier>,
    /// Per rack type: whether each rack is mounted on some carrier.
    mounted: HashMap<u32, Vec<bool>>,
}

/// Carrier and rack picked for a job.
struct Grant {
    carrier: usize,
    rack: (u32, usize),
    change: bool,
}

impl<'a> Fleet<'a> {
    fn new(pool: &'a ResourcePool) -> Option<Self> {
        let (racks, carriers) = (pool.racks.as_ref()?, pool.carriers?);
        Some(Self {
            pool,
            carriers: vec![Carrier { mounted: None, busy_until: 0 }; carriers],
            mounted: racks.iter().map(|(&t, &n)| (t, vec![false; n])).collect(),
        })
    }

    /// Earliest time `>= from` at which a job of rack type `r` can be served.
    fn earliest(&self, r: u32, from: Time) -> Time {
        let mut times: Vec<Time> = self.carriers.iter().map(|c| c.busy_until).filter(|&t| t > from).collect();
        times.push(from);
        times.sort_unstable();
        times.dedup();
        times
            .into_iter()
            .find(|&t| self.grant(r, t).is_some())
            .expect("with every carrier idle some rack of the type is reachable")
    }

    /// Reuses the most recently freed carrier already holding a rack of type
    /// `r`. Otherwise mounts a free rack on an idle carrier, preferring empty
    /// carriers, then the one idle the longest.
    fn grant(&self, r: u32, t: Time) -> Option<Grant> {
        let idle = |c: &&(usize, &Carrier)| c.1.busy_until <= t;
        let reuse = self
            .carriers
            .iter()
            .enumerate()
            .collect::<Vec<_>>()
            .iter()
            .filter(idle)
            .filter(|(_, c)| matches!(c.mounted, Some((rt, _)) if rt == r))
            .max_by_key(|(i, c)| (c.busy_until, std::cmp::Reverse(*i)))
            .map(|&(i, c)| Grant { carrier: i, rack: c.mounted.expect("mounted"), change: false });
        if reuse.is_some() {
            return reuse;
        }
        let rack = self.mounted.get(&r)?.iter().position(|m| !m)?;
        let carrier = self
            .carriers
            .iter()
            .enumerate()
            .collect::<Vec<_>>()
            .iter()
            .filter(idle)
            .min_by_key(|(i, c)| (c.mounted.is_some(), c.busy_until, *i))
            .map(|&(i, _)| i)?;
        let change = self.carriers[carrier].mounted.is_some();
        Some(Grant { carrier, rack: (r, rack), change })
    }

    fn take(&mut self, g: &Grant, until: Time) {
        let c = &mut self.carriers[g.carrier];
        if c.mounted != Some(g.rack) {
            if let Some((ot, oi)) = c.mounted {
                self.mounted.get_mut(&ot).expect("known type")[oi] = false;
            }
            self.mounted.get_mut(&g.rack.0).expect("known type")[g.rack.1] = true;
            c.mounted = Some(g.rack);
        }
        c.busy_until = until;
    }

    fn change_time(&self, g: &Grant) -> Time {
        if g.change {
            self.pool.rack_change
        } else {
            0
        }
    }
}

/// Resource-aware on-line dispatcher.
#[derive(Debug, Clone)]
pub struct ResourceDispatcher {
    pool: ResourcePool,
    loading: Option<LoadingTable>,
}

impl ResourceDispatcher {
    pub fn new(pool: ResourcePool) -> Self {
        let loading = pool.loading.map(LoadingTable::new);
        Self { pool, loading }
    }

    pub fn pool(&self) -> &ResourcePool {
        &self.pool
    }

    pub fn loading_table(&self) -> Option<&LoadingTable> {
        self.loading.as_ref()
    }

    /// Schedule plus resource log for a complete plan.
    pub fn dispatch(&self, jobs: &JobSet, plan: &Plan) -> Result<(Schedule, ResourceLog), ResourceError> {
        plan.ensure_complete(jobs)?;
        self.pool.check(jobs)?;
        let mut schedule = Schedule::new();
        let mut log = ResourceLog::default();
        self.run(jobs, plan.as_slice(), |job, ivs, entry| {
            schedule.insert(job, ivs.to_vec());
            log.entries.push(entry);
        });
        Ok((schedule, log))
    }

    fn run(&self, jobs: &JobSet, plan: &[JobId], mut emit: impl FnMut(JobId, &[Interval], LogEntry)) {
        let mut frontier: Vec<Time> = vec![0; jobs.n_machines()];
        let mut fleet = Fleet::new(&self.pool);
        let mut loads: HashMap<Time, u64> = HashMap::new();
        let mut prev_start: Option<Time> = None;
        let mut ivs = Vec::new();
        for &j in plan {
            let job = jobs.job(j);
            let mut s = prev_start.map_or(0, |p| p + 1);
            let rack_type = job.rack_type.unwrap_or(0);
            if let Some(f) = &fleet {
                s = f.earliest(rack_type, s);
            }
            let mut loaded_in = None;
            if let Some(table) = &self.loading {
                let area = table.area();
                let bit = 1u64 << area.station_of(job);
                let mut k = s.div_euclid(area.interval);
                loop {
                    let done = loads.get(&k).copied().unwrap_or(0);
                    if table.admit(done, bit, k.rem_euclid(area.stations as Time) as usize) & bit != 0 {
                        *loads.entry(k).or_default() |= bit;
                        break;
                    }
                    k += 1;
                }
                s = s.max(k * area.interval);
                loaded_in = Some(k);
            }
            let grant = fleet.as_ref().map(|f| f.grant(rack_type, s).expect("resources free at the chosen time"));
            let change = match (&fleet, &grant) {
                (Some(f), Some(g)) => f.change_time(g),
                _ => 0,
            };

            ivs.clear();
            let mut ready = s + change;
            for (k, stage) in job.stages.iter().enumerate() {
                let (m, start) = earliest_frontier(jobs.interchangeable(stage.machine), &frontier, ready);
                let end = start + stage.duration;
                frontier[m] = end;
                if k == 0 {
                    prev_start = Some(start);
                }
                ivs.push(Interval { machine: m, start, end });
                ready = end;
            }
            if let (Some(f), Some(g)) = (&mut fleet, &grant) {
                f.take(g, ready);
            }
            let entry = LogEntry {
                job_id: j,
                process: job.job_type,
                carrier: grant.as_ref().map(|g| g.carrier),
                rack: grant.as_ref().map(|g| g.rack),
                deadline: job.deadline,
                start: if grant.is_some() { s } else { ivs[0].start },
                completion: ready,
                rack_change: change > 0,
                loaded_in,
            };
            emit(j, &ivs, entry);
        }
    }
}

impl Oracle for ResourceDispatcher {
    fn name(&self) -> &str {
        "resource"
    }

    fn schedule(&self, jobs: &JobSet, plan: &Plan) -> Result<Schedule, ModelError> {
        plan.ensure_complete(jobs)?;
        let mut schedule = Schedule::new();
        self.run(jobs, plan.as_slice(), |job, ivs, _| schedule.insert(job, ivs.to_vec()));
        Ok(schedule)
    }

    fn timings(&self, jobs: &JobSet, plan: &[JobId]) -> Timings {
        let mut t = Timings::zeroed(jobs.len());
        self.run(jobs, plan, |job, ivs, _| {
            t.start[job] = ivs[0].start;
            t.completion[job] = ivs[ivs.len() - 1].end;
        });
        t
    }
}

/// Settings for a synthetic resource-constrained instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem3Config {
    pub jobs: usize,
    /// Distinct production processes (job types).
    pub processes: usize,
    pub rack_types: usize,
    pub max_racks_per_type: usize,
    pub carriers: usize,
    /// Machine groups; each holds `machines_per_group` parallel machines.
    pub groups: usize,
    pub machines_per_group: usize,
    pub seed: u64,
}

impl Default for Problem3Config {
    fn default() -> Self {
        Self {
            jobs: 120,
            processes: 16,
            rack_types: 24,
            max_racks_per_type: 3,
            carriers: 12,
            groups: 5,
            machines_per_group: 2,
            seed: 0,
        }
    }
}

impl fmt::Display for Problem3Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} jobs, {} processes, {} rack types, {} carriers",
            self.jobs, self.processes, self.rack_types, self.carriers
        )
    }
}

/// Random plant-like instance: each process has a fixed route over machine
/// groups and a few compatible rack types; jobs draw a process, a rack type
/// and a deadline.
pub fn gen_problem3(cfg: &Problem3Config) -> Result<(JobSet, ResourcePool), ResourceError> {
    if cfg.jobs == 0 || cfg.processes == 0 || cfg.rack_types == 0 || cfg.groups == 0 || cfg.machines_per_group == 0 {
        return Err(ModelError::IncompletePlan { got: 0, expected: 1 }.into());
    }
    if cfg.carriers == 0 {
        return Err(ResourceError::NoCarriers);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let machines: Vec<Machine> = (0..cfg.groups * cfg.machines_per_group)
        .map(|id| Machine { id, group: id / cfg.machines_per_group })
        .collect();
    struct Process {
        route: Vec<(usize, Time)>,
        racks: Vec<u32>,
    }
    let processes: Vec<Process> = (0..cfg.processes)
        .map(|_| {
            let mut groups: Vec<usize> = (0..cfg.groups).collect();
            rand::seq::SliceRandom::shuffle(&mut groups[..], &mut rng);
            groups.truncate(rng.gen_range(1..=cfg.groups.min(4)));
            let route = groups.into_iter().map(|g| (g * cfg.machines_per_group, rng.gen_range(5..=30))).collect();
            let racks = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..cfg.rack_types) as u32).collect();
            Process { route, racks }
        })
        .collect();
    let mut total = 0;
    let mut jobs = Vec::with_capacity(cfg.jobs);
    for id in 0..cfg.jobs {
        let ty = rng.gen_range(0..cfg.processes);
        let p = &processes[ty];
        let stages: Vec<Stage> = p
            .route
            .iter()
            .map(|&(machine, d)| Stage { machine, duration: (d + rng.gen_range(-2..=2)).max(1) })
            .collect();
        total += stages.iter().map(|s| s.duration).sum::<Time>();
        let rack = p.racks[rng.gen_range(0..p.racks.len())];
        jobs.push((id, ty as u32, stages, rack));
    }
    // deadlines spread over a rough estimate of the schedule length
    let horizon = (total / (cfg.groups * cfg.machines_per_group) as Time).max(1) * 2;
    let jobs = jobs
        .into_iter()
        .map(|(id, ty, stages, rack)| {
            let d = rng.gen_range(horizon / 4..=horizon.max(horizon / 4 + 1));
            Job::new(id, ty, stages, Some(d), Some(rack))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let jobs = JobSet::new(jobs, machines)?;
    let mut racks = BTreeMap::new();
    for j in jobs.jobs() {
        racks.entry(j.rack_type.expect("generated")).or_insert_with(|| rng.gen_range(1..=cfg.max_racks_per_type));
    }
    Ok((jobs, ResourcePool::new(racks, cfg.carriers)))
}
