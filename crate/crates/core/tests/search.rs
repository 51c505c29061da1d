mod common;

use bbplan_core::abstraction::{Nested, OptionHierarchy};
use bbplan_core::instances::gen_problem1;
use bbplan_core::metrics::{Evaluator, Objective};
use bbplan_core::search::*;
use common::{brute_force_best, evaluator, permutations, random_shop};

fn sims(n: u64, seed: u64) -> SearchConfig {
    SearchConfig { budget: Budget::Simulations(n), seed, ..Default::default() }
}

/// Enough simulations, and enough exploration, for UCT to enumerate every
/// plan of six jobs; best-path memorisation then returns the best one.
fn exhaustive(seed: u64) -> SearchConfig {
    SearchConfig {
        c: 2.0,
        budget: Budget::Simulations(20_000),
        enhancements: Enhancements { best_path: true, ..Default::default() },
        seed,
        ..Default::default()
    }
}

#[test]
fn heap_permutations_are_all_distinct() {
    let mut p = permutations(5);
    assert_eq!(p.len(), 120);
    p.sort();
    p.dedup();
    assert_eq!(p.len(), 120);
}

#[test]
fn three_jobs_every_variant_is_optimal() {
    for seed in 0..5 {
        let jobs = random_shop(seed, 3, 3);
        let ev = evaluator(&jobs, false, Objective::Makespan);
        let best = brute_force_best(&ev);
        let flat = OptionHierarchy::flat(3);
        for algo in Algorithm::ALL {
            let out = run_algorithm(algo, &ev, Some(&flat), 2, &exhaustive(seed)).unwrap();
            assert_eq!(ev.objective(out.plan.as_slice()), best, "{algo} on shop {seed}");
        }
    }
}

#[test]
fn six_job_instances_reach_the_brute_force_optimum() {
    for seed in 0..8 {
        let jobs = random_shop(100 + seed, 6, 4);
        for objective in [Objective::Makespan, Objective::MaxLateness] {
            let ev = evaluator(&jobs, seed % 2 == 0, objective);
            let best = brute_force_best(&ev);
            for algo in [Algorithm::FlatMcs, Algorithm::Mcts, Algorithm::Nmcs] {
                let out = run_algorithm(algo, &ev, None, 2, &exhaustive(seed)).unwrap();
                assert_eq!(ev.objective(out.plan.as_slice()), best, "{algo} {objective} on shop {seed}");
            }
        }
    }
}

#[test]
fn two_jobs_flat_mcs_picks_the_better_order() {
    for seed in 0..10 {
        let jobs = random_shop(200 + seed, 2, 3);
        let ev = evaluator(&jobs, true, Objective::MaxLateness);
        let out = flat_mcs_plan(&ev, &sims(50, seed)).unwrap();
        assert_eq!(ev.objective(out.plan.as_slice()), brute_force_best(&ev));
    }
}

#[test]
fn one_job_is_returned_as_is() {
    let jobs = random_shop(1, 1, 2);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    for algo in Algorithm::ALL {
        let out = run_algorithm(algo, &ev, None, 2, &sims(10, 0)).unwrap();
        assert_eq!(out.plan.as_slice(), &[0]);
    }
}

#[test]
fn tiny_budgets_still_give_complete_plans() {
    let jobs = random_shop(3, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    for budget in [0, 1] {
        for algo in Algorithm::ALL {
            let out = run_algorithm(algo, &ev, None, 2, &sims(budget, 4)).unwrap();
            assert!(out.plan.is_complete(&jobs), "{algo} with budget {budget}");
            if budget == 0 {
                assert_eq!(out.simulations, 0);
            }
        }
    }
}

#[test]
fn best_path_returns_the_best_plan_ever_scored() {
    let p = gen_problem1(40).unwrap();
    let ev = evaluator(&p.jobs, true, Objective::Makespan);
    let h = OptionHierarchy::from_nested(&Nested::Group(vec![
        Nested::Group((0..14).map(Nested::Job).collect()),
        Nested::Group((14..28).map(Nested::Job).collect()),
        Nested::Group((28..40).map(Nested::Job).collect()),
    ]))
    .unwrap();
    for algo in Algorithm::ALL {
        let cfg = SearchConfig { enhancements: Enhancements { best_path: true, ..Default::default() }, ..sims(40, 5) };
        let out = run_algorithm(algo, &ev, Some(&h), 2, &cfg).unwrap();
        // re-evaluating the stored plan reproduces the best score exactly
        assert_eq!(out.score, ev.score(out.plan.as_slice()), "{algo}");
        assert_eq!(out.score, out.best_score, "{algo}");
    }
}

#[test]
fn without_best_path_the_plan_never_beats_the_best_seen() {
    let jobs = random_shop(9, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    for algo in [Algorithm::FlatMcs, Algorithm::Mcts] {
        let out = run_algorithm(algo, &ev, None, 2, &sims(20, 1)).unwrap();
        assert!(out.score <= out.best_score, "{algo}");
    }
}

#[test]
fn flat_hierarchy_is_plain_search() {
    let jobs = random_shop(11, 6, 3);
    let ev = evaluator(&jobs, false, Objective::Makespan);
    let flat = OptionHierarchy::flat(6);
    for seed in 0..3 {
        let cfg = SearchConfig { enhancements: Enhancements::all(), ..sims(30, seed) };
        let a = mcts_plan(&ev, &cfg).unwrap();
        let b = hmcts_plan(&ev, &flat, &cfg).unwrap();
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.trace, b.trace);
        let a = nmcs_plan(&ev, 2, &sims(30, seed)).unwrap();
        let b = hnmcs_plan(&ev, &flat, 2, &sims(30, seed)).unwrap();
        assert_eq!(a.plan, b.plan);
    }
}

#[test]
fn first_decision_branches_over_top_options_only() {
    let jobs = random_shop(12, 5, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    let h: Nested = serde_json::from_str("[[[0,1],2],[3,4]]").unwrap();
    let h = OptionHierarchy::from_nested(&h).unwrap();
    let out = hmcts_plan(&ev, &h, &sims(200, 0)).unwrap();
    assert!(out.plan.is_complete(&jobs));
    // depth 1 of the first tree holds the options {0,1,2} and {3,4}
    assert_eq!(out.trace.widths[1], 2);
    let plain = mcts_plan(&ev, &sims(200, 0)).unwrap();
    assert_eq!(plain.trace.widths[1], 5);
}

#[test]
fn hierarchy_must_cover_the_jobs() {
    let jobs = random_shop(13, 4, 2);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    let err = hmcts_plan(&ev, &OptionHierarchy::flat(3), &sims(5, 0)).unwrap_err();
    assert!(matches!(err, SearchError::Hierarchy(_)));
    assert_eq!(nmcs_plan(&ev, 0, &sims(5, 0)).unwrap_err(), SearchError::ZeroLevel);
    let err = parallel_search(ParallelMode::Tree, 0, Algorithm::Mcts, &ev, None, 2, &sims(5, 0)).unwrap_err();
    assert_eq!(err, SearchError::ZeroThreads);
}

#[test]
fn same_seed_same_plan() {
    let jobs = random_shop(14, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    for algo in Algorithm::ALL {
        let cfg = SearchConfig { enhancements: Enhancements::all(), ..sims(25, 3) };
        let a = run_algorithm(algo, &ev, None, 2, &cfg).unwrap();
        let b = run_algorithm(algo, &ev, None, 2, &cfg).unwrap();
        assert_eq!(a.plan, b.plan, "{algo}");
    }
}

#[test]
fn tree_parallel_root_visits_match_simulations() {
    let jobs = random_shop(15, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    for rep in 0..20 {
        let out = parallel_search(ParallelMode::Tree, 4, Algorithm::Mcts, &ev, None, 2, &sims(50, rep)).unwrap();
        assert_eq!(out.trace.step_simulations[0], 200);
        assert_eq!(out.trace.root_visits[0], 200);
    }
}

#[test]
fn root_parallel_returns_the_best_tree() {
    let jobs = random_shop(16, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    let out = parallel_search(ParallelMode::Root, 4, Algorithm::Mcts, &ev, None, 2, &sims(20, 2)).unwrap();
    assert_eq!(out.score, out.best_score);
    assert_eq!(out.trace.step_simulations[0], 80);
}

#[test]
fn single_thread_parallel_modes_match_serial() {
    let jobs = random_shop(17, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    let serial = mcts_plan(&ev, &sims(30, 8)).unwrap();
    let tree = parallel_search(ParallelMode::Tree, 1, Algorithm::Mcts, &ev, None, 2, &sims(30, 8)).unwrap();
    assert_eq!(serial.plan, tree.plan);
    let cfg = SearchConfig { enhancements: Enhancements { best_path: true, ..Default::default() }, ..sims(30, 8) };
    let serial = mcts_plan(&ev, &cfg).unwrap();
    let root = parallel_search(ParallelMode::Root, 1, Algorithm::Mcts, &ev, None, 2, &cfg).unwrap();
    assert_eq!(serial.plan, root.plan);
}

#[test]
fn time_redistribution_front_loads_simulations() {
    let jobs = random_shop(18, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    let cfg = SearchConfig { enhancements: Enhancements { time_redistribution: true, ..Default::default() }, ..sims(100, 0) };
    let out = mcts_plan(&ev, &cfg).unwrap();
    let s = &out.trace.step_simulations;
    assert_eq!(s[0], 190);
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn wall_clock_budget_terminates() {
    let jobs = random_shop(19, 6, 3);
    let ev = evaluator(&jobs, true, Objective::Makespan);
    let cfg = SearchConfig { budget: Budget::Time(std::time::Duration::from_millis(2)), ..Default::default() };
    for algo in Algorithm::ALL {
        let out = run_algorithm(algo, &ev, None, 2, &cfg).unwrap();
        assert!(out.plan.is_complete(&jobs));
    }
}

#[test]
fn progressive_history_search_is_valid_and_good() {
    let p = gen_problem1(40).unwrap();
    let ev = evaluator(&p.jobs, true, Objective::Makespan);
    let cfg = SearchConfig { enhancements: Enhancements::all(), ..sims(100, 0) };
    let out = mcts_plan(&ev, &cfg).unwrap();
    assert!(out.plan.is_complete(&p.jobs));
    let random = bbplan_core::schedulers::heuristic_plan(&p.jobs, bbplan_core::schedulers::Rule::Random, 0).unwrap();
    assert!(ev.objective(out.plan.as_slice()) <= ev.objective(random.as_slice()));
}
