//! Runs every (instance, method, enhancement set, seed) cell of a
//! configuration and aggregates the results.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use bbplan_core::abstraction::{
    abstraction_budget, detached_abstraction, integrated_abstraction, job_features, IntegratedConfig, Metric,
    OptionHierarchy,
};
use bbplan_core::instances::{gen_demirkol, gen_problem1};
use bbplan_core::metrics::{Evaluator, Objective, ScheduleEvaluator};
use bbplan_core::resources::{gen_problem3, Problem3Config, ResourceDispatcher, ResourcePool};
use bbplan_core::schedulers::{heuristic_plan, OfflineDispatcher, OnlineDispatcher};
use bbplan_core::search::{run_algorithm, Budget, SearchConfig};
use bbplan_core::{JobSet, Oracle, Time};
use serde::Serialize;

use crate::config::{AbstractionKind, Comparison, DispatcherKind, ExperimentConfig, Method, Problem, Term, Variant};
use crate::stats::{aggregate, Aggregate};

/// One generated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub jobs: Arc<JobSet>,
    pub pool: Option<ResourcePool>,
    /// Known optimal makespan, used as the ratio reference when present.
    pub optimum: Option<Time>,
}

pub fn build_instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    (0..cfg.instances)
        .map(|i| {
            let seed = i as u64;
            Ok(match cfg.problem {
                Problem::Problem1 => {
                    let p = gen_problem1(cfg.jobs)?;
                    Instance {
                        name: format!("p1-{}", cfg.jobs),
                        jobs: Arc::new(p.jobs),
                        pool: None,
                        optimum: Some(p.optimum),
                    }
                }
                Problem::Problem2 => Instance {
                    name: format!("p2-{}x{}-{i}", cfg.jobs, cfg.machines),
                    jobs: Arc::new(gen_demirkol(cfg.jobs, cfg.machines, seed, cfg.due_t, cfg.due_r)?),
                    pool: None,
                    optimum: None,
                },
                Problem::Problem3 => {
                    let p3 = Problem3Config { jobs: cfg.jobs, groups: cfg.machines, seed, ..Default::default() };
                    let (jobs, pool) = gen_problem3(&p3)?;
                    Instance { name: format!("p3-{}-{i}", cfg.jobs), jobs: Arc::new(jobs), pool: Some(pool), optimum: None }
                }
            })
        })
        .collect()
}

pub fn make_oracle(kind: DispatcherKind, pool: Option<&ResourcePool>) -> Arc<dyn Oracle> {
    match kind {
        DispatcherKind::Online => Arc::new(OnlineDispatcher),
        DispatcherKind::Offline => Arc::new(OfflineDispatcher),
        DispatcherKind::Resource => {
            Arc::new(ResourceDispatcher::new(pool.cloned().unwrap_or_else(ResourcePool::unlimited)))
        }
    }
}

/// Evaluator for an instance. Makespan runs on instances with a known
/// optimum are measured against it.
pub fn make_evaluator(inst: &Instance, dispatcher: DispatcherKind, objective: Objective) -> Result<ScheduleEvaluator> {
    let ev = ScheduleEvaluator::new(inst.jobs.clone(), make_oracle(dispatcher, inst.pool.as_ref()), objective)?;
    Ok(match (objective, inst.optimum) {
        (Objective::Makespan, Some(opt)) => ev.with_optimum(opt),
        _ => ev,
    })
}

/// Evaluator calls the planning search is expected to make, used to size
/// the abstraction search. Time budgets are converted with a measured
/// evaluation rate.
fn planning_evaluations(ev: &dyn Evaluator, budget: Budget) -> u64 {
    let n = ev.n_jobs() as u64;
    match budget {
        Budget::Simulations(s) => s * n,
        Budget::Time(per_step) => {
            let plan: Vec<usize> = (0..ev.n_jobs()).collect();
            let probes = 16;
            let t = Instant::now();
            for _ in 0..probes {
                std::hint::black_box(ev.score(&plan));
            }
            let each = t.elapsed().max(Duration::from_nanos(1)) / probes;
            (per_step.as_secs_f64() / each.as_secs_f64()) as u64 * n
        }
    }
}

pub fn build_hierarchy(
    kind: AbstractionKind,
    jobs: &JobSet,
    ev: &dyn Evaluator,
    budget: Budget,
    ratio: f64,
    seed: u64,
) -> Result<OptionHierarchy> {
    Ok(match kind {
        AbstractionKind::Flat => OptionHierarchy::flat(jobs.len().max(1)),
        AbstractionKind::Detached => detached_abstraction(&job_features(jobs), Metric::Euclidean)?,
        AbstractionKind::Integrated => {
            let evaluations = abstraction_budget(planning_evaluations(ev, budget), ratio);
            integrated_abstraction(jobs, ev, &IntegratedConfig { evaluations, seed, ..Default::default() })?
        }
    })
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub problem: String,
    pub algo: String,
    pub enhancements: String,
    pub seed: u64,
    pub objective: f64,
    pub ratio: f64,
    pub wall_ms: f64,
    pub instance: String,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    instance: usize,
    method: Method,
    variant: Variant,
    seed: u64,
}

fn cells(cfg: &ExperimentConfig, n_instances: usize) -> Vec<Cell> {
    let mut out = Vec::new();
    for instance in 0..n_instances {
        for &method in &cfg.methods {
            // rules ignore enhancements, so they run once per seed
            let variants: &[Variant] = match method {
                Method::Search(_) => &cfg.variants,
                Method::Baseline(_) => &[Variant { enhancements: Default::default(), parallelism: Default::default() }],
            };
            for &variant in variants {
                for seed in 0..cfg.seeds as u64 {
                    out.push(Cell { instance, method, variant, seed });
                }
            }
        }
    }
    out
}

fn run_cell(cfg: &ExperimentConfig, inst: &Instance, ev: &ScheduleEvaluator, cell: &Cell) -> Result<ResultRow> {
    let start = Instant::now();
    let plan = match cell.method {
        Method::Baseline(rule) => heuristic_plan(&inst.jobs, rule, cell.seed)?,
        Method::Search(algo) => {
            let hierarchy = if algo.is_hierarchical() {
                Some(build_hierarchy(cfg.abstraction, &inst.jobs, ev, cfg.budget, cfg.abstraction_ratio, cell.seed)?)
            } else {
                None
            };
            let search = SearchConfig {
                c: cfg.c,
                budget: cfg.budget,
                enhancements: cell.variant.enhancements,
                parallelism: cell.variant.parallelism,
                seed: cell.seed,
                ..Default::default()
            };
            run_algorithm(algo, ev, hierarchy.as_ref(), cfg.nmcs_level, &search)?.plan
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(ResultRow {
        problem: cfg.problem.to_string(),
        algo: cell.method.to_string(),
        enhancements: cell.variant.to_string(),
        seed: cell.seed,
        objective: ev.objective(plan.as_slice()),
        ratio: ev.ratio(plan.as_slice()),
        wall_ms,
        instance: inst.name.clone(),
    })
}

/// Runs all cells on `cfg.workers` threads. Rows come back in cell order
/// regardless of which worker ran them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if cfg.objective.needs_deadlines() && cfg.problem == Problem::Problem1 {
        return Err(anyhow!("problem1 has no deadlines; use the makespan objective"));
    }
    let instances = build_instances(cfg)?;
    let evaluators: Vec<ScheduleEvaluator> = instances
        .iter()
        .map(|i| make_evaluator(i, cfg.dispatcher, cfg.objective))
        .collect::<Result<_>>()?;
    let cells = cells(cfg, instances.len());
    let results: Mutex<Vec<Option<Result<ResultRow>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.min(cells.len()).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let row = run_cell(cfg, &instances[cell.instance], &evaluators[cell.instance], cell);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(row);
            });
        }
    });
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

/// Aggregate over all instances and seeds of one (algorithm, enhancements)
/// pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub problem: String,
    pub algo: String,
    pub enhancements: String,
    pub ratio: Aggregate,
    pub objective: Aggregate,
    pub wall_ms: Aggregate,
}

/// Summaries in order of first appearance.
pub fn summarise(rows: &[ResultRow]) -> Vec<Summary> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        let k = (r.problem.clone(), r.algo.clone(), r.enhancements.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(problem, algo, enhancements)| {
            let sel: Vec<&ResultRow> =
                rows.iter().filter(|r| r.problem == problem && r.algo == algo && r.enhancements == enhancements).collect();
            let col = |f: fn(&ResultRow) -> f64| aggregate(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            Summary {
                ratio: col(|r| r.ratio),
                objective: col(|r| r.objective),
                wall_ms: col(|r| r.wall_ms),
                problem,
                algo,
                enhancements,
            }
        })
        .collect()
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summaries: &[Summary]) -> Result<String> {
    Ok(serde_json::to_string_pretty(summaries)?)
}

/// Outcome of one `expect` line.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub expectation: String,
    pub left: Option<f64>,
    pub right: Option<f64>,
    pub passed: bool,
}

fn resolve(term: &Term, summaries: &[Summary]) -> Option<f64> {
    match term {
        Term::Number(x) => Some(*x),
        Term::Label(l) => {
            let (algo, enh) = match l.split_once('/') {
                Some((a, e)) => (a, Some(e)),
                None => (l.as_str(), None),
            };
            let algo = algo.parse::<Method>().map(|m| m.to_string()).unwrap_or_else(|_| algo.to_string());
            let mut found = summaries.iter().filter(|s| s.algo == algo);
            match enh {
                Some(e) => found.find(|s| s.enhancements == e),
                None => {
                    let all: Vec<&Summary> = found.collect();
                    all.iter().find(|s| s.enhancements == "none").or(all.first()).copied()
                }
            }
            .map(|s| s.ratio.mean)
        }
    }
}

pub fn check(cfg: &ExperimentConfig, summaries: &[Summary]) -> Vec<CheckResult> {
    cfg.expectations
        .iter()
        .map(|e| {
            let (left, right) = (resolve(&e.left, summaries), resolve(&e.right, summaries));
            let passed = match (left, right) {
                (Some(l), Some(r)) => match e.op {
                    Comparison::Less => l < r,
                    Comparison::LessOrEqual => l <= r,
                },
                _ => false,
            };
            CheckResult { expectation: e.to_string(), left, right, passed }
        })
        .collect()
}
