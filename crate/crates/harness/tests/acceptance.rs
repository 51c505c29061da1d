//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! to stderr (uncaptured) and the test fails if any of them fails.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bbplan_core::abstraction::{
    detached_abstraction, integrated_abstraction, mean_shift, IntegratedConfig, JobFeatures, Metric, OptionHierarchy,
};
use bbplan_core::metrics::{Evaluator, Objective, ScheduleEvaluator};
use bbplan_core::resources::{gen_problem3, Problem3Config, ResourceDispatcher, ResourcePool};
use bbplan_core::schedulers::{heuristic_plan, online_dispatch, OfflineDispatcher, OnlineDispatcher, Rule};
use bbplan_core::search::{
    parallel_search, redistribution_factor, run_algorithm, time_for_step, Algorithm, Budget, Enhancements,
    ParallelMode, SearchBudget, SearchConfig,
};
use bbplan_core::surrogate::{gradient_check, FeatureSpace, FeedForward, SurrogateEvaluator, WindowSample};
use bbplan_core::{validate_schedule, Job, JobId, JobSet, Machine, Oracle, Plan, Stage};
use bbplan_harness::experiment::{run_experiment, summarise, ResultRow, Summary};
use bbplan_harness::ExperimentConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Simulations per committed job for the Problem 1 comparison.
const P1_SIMS: u64 = 300;
/// Simulations per committed job (per thread) for Problem 2.
const P2_SIMS: u64 = 200;
/// Simulations per committed job for the lateness comparison.
const LATENESS_SIMS: u64 = 500;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random shop with 1..=max_machines machines; each job visits a random
/// subset of them in random order.
fn random_shop(rng: &mut ChaCha8Rng, n_jobs: usize, max_machines: usize) -> JobSet {
    let m = rng.gen_range(1..=max_machines);
    let jobs = (0..n_jobs)
        .map(|id| {
            let mut machines: Vec<usize> = (0..m).collect();
            machines.shuffle(rng);
            machines.truncate(rng.gen_range(1..=m));
            let stages = machines.iter().map(|&machine| Stage { machine, duration: rng.gen_range(1..=20) }).collect();
            Job::new(id, rng.gen_range(0..4), stages, Some(rng.gen_range(5..80)), None).unwrap()
        })
        .collect();
    // some shops get parallel machine groups
    let machines = if rng.gen_bool(0.3) && m > 1 {
        (0..m).map(|id| Machine { id, group: id / 2 }).collect()
    } else {
        (0..m).map(|id| Machine { id, group: id }).collect()
    };
    JobSet::new(jobs, machines).unwrap()
}

fn evaluator(jobs: &JobSet, oracle: Arc<dyn Oracle>, objective: Objective) -> ScheduleEvaluator {
    ScheduleEvaluator::new(Arc::new(jobs.clone()), oracle, objective).unwrap()
}

fn all_plans(n: usize) -> Vec<Vec<JobId>> {
    fn rec(prefix: &mut Vec<JobId>, left: &mut Vec<JobId>, out: &mut Vec<Vec<JobId>>) {
        if left.is_empty() {
            out.push(prefix.clone());
        }
        for i in 0..left.len() {
            let j = left.remove(i);
            prefix.push(j);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(i, j);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut plans, mut bad) = (0, 0);
    for _ in 0..20 {
        let n = rng.gen_range(5..=40);
        let jobs = random_shop(&mut rng, n, 8);
        for _ in 0..50 {
            let plan = heuristic_plan(&jobs, Rule::Random, rng.gen()).unwrap();
            plans += 1;
            for oracle in [&OnlineDispatcher as &dyn Oracle, &OfflineDispatcher] {
                let s = oracle.schedule(&jobs, &plan).unwrap();
                if !validate_schedule(&s, &jobs).unwrap().is_ok() {
                    bad += 1;
                }
            }
        }
    }
    let t = start.elapsed();
    verdict(
        plans >= 1000 && bad == 0 && t < Duration::from_secs(30),
        format!("{plans} plans x 2 dispatchers, {bad} infeasible, {:.2}s", t.as_secs_f64()),
    )
}

/// Enough exploration and simulations to enumerate six-job trees; the
/// best plan seen is returned.
fn exhaustive(seed: u64) -> SearchConfig {
    SearchConfig {
        c: 2.0,
        budget: Budget::Simulations(20_000),
        enhancements: Enhancements { best_path: true, ..Default::default() },
        seed,
        ..Default::default()
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut misses = Vec::new();
    let mut runs = 0;
    for inst in 0..50u64 {
        let n = rng.gen_range(1..=6);
        let jobs = random_shop(&mut rng, n, 4);
        let oracle: Arc<dyn Oracle> = if inst % 2 == 0 { Arc::new(OnlineDispatcher) } else { Arc::new(OfflineDispatcher) };
        let objective = [Objective::Makespan, Objective::MaxLateness, Objective::TotalLateness][inst as usize % 3];
        let ev = evaluator(&jobs, oracle, objective);
        let best = all_plans(n).iter().map(|p| ev.objective(p)).fold(f64::INFINITY, f64::min);
        let flat = OptionHierarchy::flat(n);
        for algo in [Algorithm::FlatMcs, Algorithm::Mcts, Algorithm::Nmcs, Algorithm::HMcts] {
            let out = run_algorithm(algo, &ev, Some(&flat), 2, &exhaustive(inst)).unwrap();
            runs += 1;
            let got = ev.objective(out.plan.as_slice());
            if got != best {
                misses.push(format!("instance {inst} {algo}: {got} vs {best}"));
            }
        }
    }
    let t = start.elapsed();
    verdict(
        misses.is_empty() && t < Duration::from_secs(300),
        format!("{runs} runs, {} off the optimum {:?}, {:.1}s", misses.len(), misses, t.as_secs_f64()),
    )
}

fn mean_of<'a>(s: &'a [Summary], algo: &str, enh: &str) -> &'a Summary {
    s.iter().find(|x| x.algo == algo && x.enhancements == enh).unwrap_or_else(|| panic!("no {algo}/{enh}"))
}

fn criterion_3() -> Outcome {
    let cfg: ExperimentConfig = format!(
        "problem = problem1\njobs = 200\nseeds = 10\nalgorithms = hmcts, mcts, flat, nmcs, random\n\
         abstraction = integrated\nbudget = sims:{P1_SIMS}\n"
    )
    .parse()
    .unwrap();
    let s = summarise(&run_experiment(&cfg).unwrap());
    let m = |a: &str| mean_of(&s, a, "none").ratio.mean;
    let (h, mcts, flat, nmcs, random) = (m("hmcts"), m("mcts"), m("flat"), m("nmcs"), m("random"));
    let ok = h < mcts && mcts <= flat && mcts <= nmcs && flat < random && nmcs < random && h < 1.10;
    verdict(ok, format!("hmcts {h:.4} mcts {mcts:.4} flat {flat:.4} nmcs {nmcs:.4} random {random:.4}"))
}

/// `a` is no worse than `b`, or within one confidence half-width of it.
fn no_worse(a: &Summary, b: &Summary) -> bool {
    let ci = a.ratio.ci95.unwrap_or(0.0).max(b.ratio.ci95.unwrap_or(0.0));
    a.ratio.mean <= b.ratio.mean + ci
}

fn criterion_4() -> Outcome {
    let cfg: ExperimentConfig = format!(
        "problem = problem2\njobs = 100\nmachines = 10\ninstances = 5\nseeds = 10\nalgorithms = mcts, spt, lpt\n\
         enhancements = none, tr, all+root:4\nbudget = sims:{P2_SIMS}\n"
    )
    .parse()
    .unwrap();
    let s = summarise(&run_experiment(&cfg).unwrap());
    let (basic, tr, full) = (mean_of(&s, "mcts", "none"), mean_of(&s, "mcts", "tr"), mean_of(&s, "mcts", "tr+bp+ph+root:4"));
    let (spt, lpt) = (mean_of(&s, "spt", "none"), mean_of(&s, "lpt", "none"));
    let ok = basic.ratio.mean < spt.ratio.mean && basic.ratio.mean < lpt.ratio.mean && no_worse(tr, basic) && no_worse(full, tr);
    verdict(
        ok,
        format!(
            "spt {:.4} lpt {:.4} mcts {:.4}±{:.4} +tr {:.4}±{:.4} +all+root:4 {:.4}±{:.4}",
            spt.ratio.mean,
            lpt.ratio.mean,
            basic.ratio.mean,
            basic.ratio.ci95.unwrap_or(0.0),
            tr.ratio.mean,
            tr.ratio.ci95.unwrap_or(0.0),
            full.ratio.mean,
            full.ratio.ci95.unwrap_or(0.0)
        ),
    )
}

fn criterion_5() -> Outcome {
    let cfg: ExperimentConfig = format!(
        "problem = problem2\njobs = 50\nmachines = 10\ninstances = 10\nseeds = 1\nobjective = lmax\n\
         algorithms = mcts, edd\nenhancements = all\nbudget = sims:{LATENESS_SIMS}\n"
    )
    .parse()
    .unwrap();
    let rows = run_experiment(&cfg).unwrap();
    let by = |algo: &str| -> Vec<&ResultRow> { rows.iter().filter(|r| r.algo == algo).collect() };
    let (mcts, edd) = (by("mcts"), by("edd"));
    let wins = mcts.iter().zip(&edd).filter(|(m, e)| m.instance == e.instance && m.ratio < e.ratio).count();
    let pairs: Vec<String> = mcts.iter().zip(&edd).map(|(m, e)| format!("{:.3}/{:.3}", m.ratio, e.ratio)).collect();
    verdict(wins >= 8, format!("mcts below edd on {wins}/10 instances [{}]", pairs.join(" ")))
}

fn criterion_6() -> Outcome {
    let base = Duration::from_millis(500);
    let mut worst: f64 = 0.0;
    for n in [1usize, 2, 7, 100, 200, 2000] {
        let t = base.as_secs_f64();
        let b = SearchBudget { base, total_jobs: n };
        worst = worst.max((redistribution_factor(0, n) * t - 1.9 * t).abs());
        worst = worst.max((redistribution_factor(n, n) * t - 0.1 * t).abs() / t);
        let total: f64 = (0..n).map(|d| redistribution_factor(d, n) * t).sum();
        worst = worst.max((total - t * (n as f64 + 0.9)).abs() / (t * (n as f64 + 0.9)));
        // durations round to whole nanoseconds
        let sum: Duration = (0..n).map(|d| time_for_step(d, &b)).sum();
        let exact = base.mul_f64(n as f64 + 0.9);
        if sum.abs_diff(exact) > Duration::from_nanos(n as u64) {
            return Err(format!("n = {n}: durations sum to {sum:?}, expected {exact:?}"));
        }
    }
    verdict(worst < 1e-12, format!("largest relative error {worst:.2e}"))
}

fn line_features(xs: &[f64]) -> Vec<JobFeatures> {
    xs.iter().map(|&x| vec![x]).collect()
}

fn criterion_7() -> Outcome {
    let abc = detached_abstraction(&line_features(&[0.0, 1.0, 2.0]), Metric::Euclidean).unwrap();
    let cba = detached_abstraction(&line_features(&[2.0, 1.0, 0.0]), Metric::Euclidean).unwrap();
    // both read ((first, second), third) in their own job order, i.e.
    // ((a,b),c) and ((c,b),a)
    let detached_ok = abc.to_string() == "((0,1),2)" && cba.to_string() == "((0,1),2)";

    let triple = JobSet::with_serial_machines(
        (0..3).map(|i| Job::new(i, 0, vec![Stage { machine: i, duration: 5 }], None, Some(i as u32)).unwrap()).collect(),
        3,
    )
    .unwrap();
    let ev = evaluator(&triple, Arc::new(OnlineDispatcher), Objective::Makespan);
    let integrated = integrated_abstraction(&triple, &ev, &IntegratedConfig::default()).unwrap();
    let integrated_ok = integrated.to_string() == "(0,1,2)";

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut split = 0;
    for _ in 0..100 {
        let dim = rng.gen_range(1..=4);
        let distinct: Vec<JobFeatures> = (0..rng.gen_range(1..=6)).map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
        let mut pick: Vec<usize> = (0..30).map(|_| rng.gen_range(0..distinct.len())).collect();
        pick.shuffle(&mut rng);
        let features: Vec<JobFeatures> = pick.iter().map(|&i| distinct[i].clone()).collect();
        let labels = mean_shift(&features, rng.gen_range(0.1..8.0)).unwrap();
        for a in 0..30 {
            for b in 0..30 {
                if pick[a] == pick[b] && labels[a] != labels[b] {
                    split += 1;
                }
            }
        }
    }
    verdict(
        detached_ok && integrated_ok && split == 0,
        format!("detached {abc} / {cba}, integrated {integrated}, {split} identical pairs split over 100 sets"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let jobs = random_shop(&mut rng, 8, 3);
    let ev = evaluator(&jobs, Arc::new(OnlineDispatcher), Objective::Makespan);
    let per_thread = 50;
    let n = 4 * per_thread;
    let mut bad = 0;
    for rep in 0..100 {
        let cfg = SearchConfig { budget: Budget::Simulations(per_thread), seed: rep, ..Default::default() };
        let out = parallel_search(ParallelMode::Tree, 4, Algorithm::Mcts, &ev, None, 2, &cfg).unwrap();
        // later roots also carry visits from the previous step's subtree, and
        // the last job is placed without searching
        let searched = &out.trace.step_simulations[..jobs.len() - 1];
        if out.trace.root_visits[0] != n || searched.iter().any(|&s| s != n) {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("N = {n}, 4 workers, {bad}/100 repetitions lost visits"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for cfg in 0..10 {
        let mut sizes = vec![rng.gen_range(2..=10)];
        sizes.extend((0..rng.gen_range(1..=3)).map(|_| rng.gen_range(2..=12)));
        sizes.push(1);
        let mut model = FeedForward::new(&sizes, cfg).unwrap();
        for l in &mut model.layers {
            l.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
        let data: Vec<WindowSample> = (0..8)
            .map(|_| WindowSample {
                input: (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                target: rng.gen_range(0.0..1.0),
            })
            .collect();
        worst = worst.max(gradient_check(&model, &data, 1e-6));
    }

    let p = bbplan_core::instances::gen_problem1(40).unwrap();
    let jobs = Arc::new(p.jobs.clone());
    let reference = ScheduleEvaluator::new(jobs.clone(), Arc::new(OnlineDispatcher), Objective::Makespan).unwrap();
    let space = FeatureSpace::for_jobs(&jobs, 8);
    let model = FeedForward::for_space(&space, 3).unwrap();
    let ev = SurrogateEvaluator::new(&reference, model, space).unwrap();
    let mut infeasible = 0;
    for seed in 0..3 {
        let cfg = SearchConfig { budget: Budget::Simulations(20), seed, ..Default::default() };
        let plan = run_algorithm(Algorithm::Mcts, &ev, None, 2, &cfg).unwrap().plan;
        let s = online_dispatch(&plan, &jobs).unwrap();
        if !plan.is_complete(&jobs) || !validate_schedule(&s, &jobs).unwrap().is_ok() {
            infeasible += 1;
        }
    }
    verdict(
        worst < 1e-4 && infeasible == 0,
        format!("max relative gradient error {worst:.2e} over 10 networks, {infeasible}/3 surrogate plans infeasible"),
    )
}

fn criterion_10() -> Outcome {
    let mut violations = 0;
    let mut mismatches = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = Problem3Config {
            jobs: rng.gen_range(10..=60),
            processes: rng.gen_range(2..=16),
            rack_types: rng.gen_range(2..=30),
            max_racks_per_type: rng.gen_range(1..=3),
            carriers: rng.gen_range(1..=12),
            groups: rng.gen_range(1..=6),
            machines_per_group: rng.gen_range(1..=3),
            seed,
        };
        let (jobs, pool) = gen_problem3(&cfg).unwrap();
        let plan = heuristic_plan(&jobs, Rule::Random, seed).unwrap();
        let (s, log) = ResourceDispatcher::new(pool.clone()).dispatch(&jobs, &plan).unwrap();
        if !log.violations(&pool).is_empty() || !validate_schedule(&s, &jobs).unwrap().is_ok() {
            violations += 1;
        }
        let (free, _) = ResourceDispatcher::new(ResourcePool::unlimited()).dispatch(&jobs, &plan).unwrap();
        if free != online_dispatch(&plan, &jobs).unwrap() {
            mismatches += 1;
        }
    }
    verdict(
        violations == 0 && mismatches == 0,
        format!("100 instances: {violations} with pool violations, {mismatches} unlimited runs differing from on-line"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("feasibility suite", criterion_1),
        ("brute-force equivalence", criterion_2),
        ("problem 1 ordering", criterion_3),
        ("problem 2 enhancements", criterion_4),
        ("lateness objective swap", criterion_5),
        ("time redistribution arithmetic", criterion_6),
        ("abstraction fidelity", criterion_7),
        ("tree-parallel conservation", criterion_8),
        ("surrogate gradients", criterion_9),
        ("resource simulator", criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(i + 1);
                ("FAIL", d)
            }
        };
        let _ = writeln!(err, "criterion {:>2} {tag} {name}: {detail} ({:.1}s)", i + 1, t.elapsed().as_secs_f64());
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn plan_helper_enumerates_permutations() {
    let p = all_plans(4);
    assert_eq!(p.len(), 24);
    assert!(p.iter().all(|x| Plan::new(x.clone()).is_ok()));
}
