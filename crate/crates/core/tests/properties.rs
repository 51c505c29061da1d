mod common;

use bbplan_core::abstraction::{
    detached_abstraction, job_features, mean_shift, Metric, Nested, OptionHierarchy,
};
use bbplan_core::metrics::{trivial_lower_bound, Objective};
use bbplan_core::schedulers::{heuristic_plan, offline_dispatch, online_dispatch, Rule};
use bbplan_core::search::{level_views, uct_value};
use bbplan_core::{validate_schedule, Plan};
use common::random_shop;
use proptest::prelude::*;

fn shuffled(n: usize, seed: u64) -> Plan {
    let mut p: Vec<usize> = (0..n).collect();
    use rand::{seq::SliceRandom, SeedableRng};
    p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    Plan::new(p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dispatchers_emit_feasible_schedules(shop in 0u64..1000, plan in 0u64..1000, n in 1usize..12) {
        let jobs = random_shop(shop, n, 4);
        let plan = shuffled(n, plan);
        for s in [online_dispatch(&plan, &jobs).unwrap(), offline_dispatch(&plan, &jobs).unwrap()] {
            let verdict = validate_schedule(&s, &jobs).unwrap();
            prop_assert!(verdict.is_ok(), "{:?}", verdict.violations);
            for j in jobs.jobs() {
                let span = s.completion(j.id).unwrap() - s.start(j.id).unwrap();
                prop_assert!(span >= j.max_processing());
                prop_assert!(s.start(j.id).unwrap() >= 0);
            }
            prop_assert!(s.timings(&jobs).makespan() >= trivial_lower_bound(&jobs));
        }
    }

    #[test]
    fn gap_filling_never_hurts(shop in 0u64..1000, plan in 0u64..1000, n in 1usize..12) {
        let jobs = random_shop(shop, n, 4);
        let plan = shuffled(n, plan);
        let on = online_dispatch(&plan, &jobs).unwrap().timings(&jobs).makespan();
        let off = offline_dispatch(&plan, &jobs).unwrap().timings(&jobs).makespan();
        prop_assert!(off <= on);
    }

    #[test]
    fn online_starts_follow_the_plan(shop in 0u64..1000, plan in 0u64..1000, n in 1usize..12) {
        let jobs = random_shop(shop, n, 4);
        let plan = shuffled(n, plan);
        let s = online_dispatch(&plan, &jobs).unwrap();
        let starts: Vec<i64> = plan.as_slice().iter().map(|&j| s.start(j).unwrap()).collect();
        prop_assert!(starts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dispatch_is_deterministic(shop in 0u64..1000, n in 1usize..10, seed in 0u64..100) {
        let jobs = random_shop(shop, n, 3);
        let plan = heuristic_plan(&jobs, Rule::Random, seed).unwrap();
        prop_assert_eq!(heuristic_plan(&jobs, Rule::Random, seed).unwrap(), plan.clone());
        prop_assert_eq!(offline_dispatch(&plan, &jobs).unwrap(), offline_dispatch(&plan, &jobs).unwrap());
    }

    #[test]
    fn uct_argmax_ignores_a_common_shift(
        means in prop::collection::vec(0.0f64..1.0, 2..8),
        visits in prop::collection::vec(1u64..50, 8),
        shift in -0.5f64..0.5,
        c in 0.0f64..2.0,
    ) {
        let n_p: u64 = visits.iter().take(means.len()).sum();
        let argmax = |d: f64| {
            (0..means.len())
                .max_by(|&a, &b| {
                    uct_value(means[a] + d, visits[a], n_p, c).total_cmp(&uct_value(means[b] + d, visits[b], n_p, c))
                })
                .unwrap()
        };
        let values: Vec<f64> = (0..means.len()).map(|i| uct_value(means[i], visits[i], n_p, c)).collect();
        let top = values[argmax(0.0)];
        // only compare when the maximum is unique up to rounding
        prop_assume!(values.iter().filter(|&&v| (v - top).abs() < 1e-9).count() == 1);
        prop_assert_eq!(argmax(0.0), argmax(shift));
    }

    #[test]
    fn c_zero_selects_the_best_mean(means in prop::collection::vec(0.0f64..1.0, 2..8), visits in prop::collection::vec(1u64..50, 8)) {
        let n_p: u64 = visits.iter().take(means.len()).sum();
        for i in 0..means.len() {
            prop_assert_eq!(uct_value(means[i], visits[i], n_p, 0.0), means[i]);
        }
    }

    #[test]
    fn abstractions_partition_the_jobs(shop in 0u64..500, n in 1usize..14) {
        let jobs = random_shop(shop, n, 3);
        let features = job_features(&jobs);
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let h = detached_abstraction(&features, metric).unwrap();
            prop_assert!(h.validate(n).is_ok());
            let views = level_views(&h, n).unwrap();
            if n > 1 {
                let last = views.last().unwrap();
                prop_assert!((0..n).all(|j| last.option_of(j) == j));
            }
            for w in views.windows(2) {
                for j in 0..n {
                    prop_assert_eq!(w[1].parent(w[1].option_of(j)), w[0].option_of(j));
                }
            }
        }
    }

    #[test]
    fn identical_features_share_a_cluster(
        points in prop::collection::vec((0u8..4, 0u8..4), 1..30),
        bandwidth in 0.1f64..5.0,
    ) {
        let f: Vec<Vec<f64>> = points.iter().map(|&(a, b)| vec![a as f64, b as f64]).collect();
        let labels = mean_shift(&f, bandwidth).unwrap();
        for i in 0..f.len() {
            for j in 0..f.len() {
                if f[i] == f[j] {
                    prop_assert_eq!(labels[i], labels[j]);
                }
            }
        }
    }

    #[test]
    fn nested_round_trips(shape in prop::collection::vec(1usize..4, 1..6)) {
        // groups of consecutive ids, sizes from `shape`
        let mut next = 0;
        let groups: Vec<Nested> = shape
            .iter()
            .map(|&k| {
                let g = Nested::Group((next..next + k).map(Nested::Job).collect());
                next += k;
                g
            })
            .collect();
        let h = OptionHierarchy::from_nested(&Nested::Group(groups));
        // singleton groups violate the arity rule unless they are the whole tree
        if shape.iter().all(|&k| k >= 2) && shape.len() >= 2 {
            let h = h.unwrap();
            prop_assert!(h.validate(next).is_ok());
            let back = OptionHierarchy::from_nested(&h.to_nested()).unwrap();
            prop_assert_eq!(back.to_string(), h.to_string());
        }
    }
}

#[test]
fn thousand_random_plans_are_feasible() {
    let mut checked = 0;
    for shop in 0..20u64 {
        let jobs = random_shop(5000 + shop, 8, 5);
        for k in 0..25 {
            let plan = shuffled(8, shop * 100 + k);
            for s in [online_dispatch(&plan, &jobs).unwrap(), offline_dispatch(&plan, &jobs).unwrap()] {
                assert!(validate_schedule(&s, &jobs).unwrap().is_ok());
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 1000);
}

#[test]
fn lateness_objectives_need_deadlines() {
    let jobs = bbplan_core::instances::gen_problem1(20).unwrap().jobs;
    assert!(Objective::MaxLateness.needs_deadlines());
    assert!(bbplan_core::metrics::ScheduleEvaluator::new(
        std::sync::Arc::new(jobs),
        std::sync::Arc::new(bbplan_core::schedulers::OnlineDispatcher),
        Objective::MaxLateness
    )
    .is_err());
}
