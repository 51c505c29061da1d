//! The step-by-step driver shared by every search variant.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::history::BigramHistory;
use super::levels::{Buckets, LevelView};
use super::tree::{Node, Stats};
use super::{
    redistribution_factor, uct_ph_value, uct_value, Budget, Parallelism, SearchConfig, SearchError,
    SearchOutcome, SearchTrace,
};
use crate::metrics::Evaluator;
use crate::model::{JobId, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Flat,
    Mcts,
    Nmcs(usize),
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Best complete plan evaluated so far.
#[derive(Debug)]
struct Best {
    score: f64,
    plan: Vec<JobId>,
}

struct SharedBest(Mutex<Best>);

impl SharedBest {
    fn new() -> Self {
        Self(Mutex::new(Best { score: f64::NEG_INFINITY, plan: Vec::new() }))
    }

    fn offer(&self, score: f64, plan: &[JobId]) {
        let mut b = self.0.lock();
        if score > b.score {
            b.score = score;
            b.plan.clear();
            b.plan.extend_from_slice(plan);
        }
    }

    /// Job at position `prefix.len()` of the best plan, if that plan extends
    /// `prefix`.
    fn next_after(&self, prefix: &[JobId]) -> Option<JobId> {
        let b = self.0.lock();
        if b.plan.len() > prefix.len() && b.plan[..prefix.len()] == *prefix {
            Some(b.plan[prefix.len()])
        } else {
            None
        }
    }
}

/// When a worker has to stop simulating.
enum Stop {
    Sims { used: AtomicU64, limit: u64 },
    Until(Instant),
}

impl Stop {
    fn take(&self) -> bool {
        match self {
            Stop::Sims { used, limit } => used.fetch_add(1, Ordering::Relaxed) < *limit,
            Stop::Until(t) => Instant::now() < *t,
        }
    }
}

#[derive(Clone, Copy)]
enum LevelBudget {
    Sims(u64),
    Until(Instant),
}

/// Everything a worker needs to search one level at one step.
struct LevelCtx<'a> {
    ev: &'a dyn Evaluator,
    view: &'a LevelView,
    prefix: &'a [JobId],
    state: &'a Buckets,
    candidates: &'a [usize],
    /// Option of the last committed job at this level.
    last: Option<usize>,
    c: f64,
    w: f64,
    ph: bool,
    best: &'a SharedBest,
}

/// State owned by one tree (a team of one or more workers).
struct Team {
    tree0: Arc<Node>,
    histories: Vec<Mutex<BigramHistory>>,
}

pub(crate) fn run(
    ev: &dyn Evaluator,
    views: &[LevelView],
    kind: Kind,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    let n = ev.n_jobs();
    let (n_teams, per_team) = match cfg.parallelism {
        Parallelism::Serial => (1, 1),
        Parallelism::Root(t) => (t, 1),
        Parallelism::Tree(t) => (1, t),
    };
    if n_teams == 0 || per_team == 0 {
        return Err(SearchError::ZeroThreads);
    }
    let use_best = cfg.enhancements.best_path
        || matches!(cfg.parallelism, Parallelism::Root(_))
        || matches!(kind, Kind::Nmcs(_));

    let mut teams: Vec<Team> = (0..n_teams)
        .map(|_| Team {
            tree0: Node::root(),
            histories: views.iter().map(|v| Mutex::new(BigramHistory::new(v.n_options()))).collect(),
        })
        .collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..n_teams * per_team)
        .map(|w| ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed, w)))
        .collect();

    let classes = ev.job_classes();
    let best = SharedBest::new();
    let all: Vec<JobId> = (0..n).collect();
    let mut states: Vec<Buckets> = views.iter().map(|v| Buckets::new(v, &all)).collect();
    let mut plan: Vec<JobId> = Vec::with_capacity(n);
    let mut trace = SearchTrace::default();
    let mut total_sims = 0u64;

    if views.is_empty() {
        plan.extend(0..n);
    }
    for d in 0..if views.is_empty() { 0 } else { n } {
        let factor = if cfg.enhancements.time_redistribution {
            redistribution_factor(d, n)
        } else {
            1.0
        };
        let mut left = match cfg.budget {
            Budget::Simulations(0) => LevelBudget::Sims(0),
            Budget::Simulations(s) => LevelBudget::Sims(((s as f64 * factor).round() as u64).max(1)),
            Budget::Time(t) => LevelBudget::Until(Instant::now() + t.mul_f64(factor)),
        };
        let mut step_sims = 0u64;
        let mut chosen: Option<usize> = None;
        let mut root_visits = 0u64;

        for (l, view) in views.iter().enumerate() {
            let candidates: Vec<usize> = (0..view.n_options())
                .filter(|&o| states[l].count(o) > 0 && chosen.map_or(true, |p| view.parent(o) == p))
                .collect();
            if candidates.len() == 1 {
                chosen = Some(candidates[0]);
                continue;
            }
            if interchangeable(&states[l], &candidates, &classes) {
                // stay on the memorised best plan when it is one of them
                let on_best = use_best
                    .then(|| best.next_after(&plan).map(|j| view.option_of(j)))
                    .flatten()
                    .filter(|o| candidates.contains(o));
                chosen = Some(on_best.unwrap_or(candidates[0]));
                continue;
            }
            let levels_left = 1 + (l + 1..views.len())
                .filter(|&m| may_branch(&views[m], &states[m], &classes))
                .count() as u32;
            let budget = match left {
                LevelBudget::Sims(r) => {
                    let a = r / levels_left as u64;
                    left = LevelBudget::Sims(r - a);
                    LevelBudget::Sims(a)
                }
                LevelBudget::Until(t) => {
                    let now = Instant::now();
                    LevelBudget::Until(now + t.saturating_duration_since(now) / levels_left)
                }
            };
            let ctx = LevelCtx {
                ev,
                view,
                prefix: &plan,
                state: &states[l],
                candidates: &candidates,
                last: plan.last().map(|&j| view.option_of(j)),
                c: cfg.c,
                w: cfg.w,
                ph: cfg.enhancements.progressive_history,
                best: &best,
            };
            let roots: Vec<Arc<Node>> = teams
                .iter()
                .map(|t| if l == 0 { t.tree0.clone() } else { Node::root() })
                .collect();
            let flat_stats: Vec<Mutex<Vec<Stats>>> =
                (0..n_teams).map(|_| Mutex::new(vec![Stats::default(); candidates.len()])).collect();

            let sims = run_level(&ctx, kind, l, &teams, &roots, &flat_stats, &mut rngs, per_team, budget);
            step_sims += sims;

            let from_best = if use_best {
                ctx.best
                    .next_after(&plan)
                    .map(|j| view.option_of(j))
                    .filter(|o| candidates.contains(o))
            } else {
                None
            };
            let decision = from_best
                .or_else(|| match kind {
                    Kind::Mcts => best_mean(candidates.iter().map(|&o| {
                        let mut agg = Stats::default();
                        for r in &roots {
                            if let Some(c) = r.child(o) {
                                let s = c.stats();
                                agg.visits += s.visits;
                                agg.sum += s.sum;
                            }
                        }
                        (o, agg)
                    })),
                    Kind::Flat => best_mean(candidates.iter().enumerate().map(|(i, &o)| {
                        let mut agg = Stats::default();
                        for fs in &flat_stats {
                            let s = fs.lock()[i];
                            agg.visits += s.visits;
                            agg.sum += s.sum;
                        }
                        (o, agg)
                    })),
                    Kind::Nmcs(_) => None,
                })
                .unwrap_or_else(|| candidates[rngs[0].gen_range(0..candidates.len())]);

            if l == 0 {
                let widths = match kind {
                    Kind::Mcts => roots[0].widths(),
                    _ => vec![1, candidates.len()],
                };
                for (r, w) in widths.into_iter().enumerate() {
                    if trace.widths.len() <= d + r {
                        trace.widths.resize(d + r + 1, 0);
                    }
                    trace.widths[d + r] = trace.widths[d + r].max(w);
                }
                root_visits = match kind {
                    Kind::Mcts => roots[0].stats().visits,
                    _ => sims,
                };
            }
            chosen = Some(decision);
        }

        // the finest level numbers options by job id
        let job = chosen.expect("at least one level");
        plan.push(job);
        for (l, v) in views.iter().enumerate() {
            let removed = states[l].remove(v.option_of(job), job);
            debug_assert!(removed);
        }
        let top = views[0].option_of(job);
        for t in &mut teams {
            t.tree0 = t.tree0.child(top).unwrap_or_else(Node::root);
        }
        total_sims += step_sims;
        trace.step_simulations.push(step_sims);
        trace.root_visits.push(root_visits);
    }

    let score = ev.score(&plan);
    let best_score = best.0.lock().score.max(score);
    Ok(SearchOutcome {
        plan: Plan::new(plan).expect("engine commits each job once"),
        score,
        best_score,
        simulations: total_sims,
        trace,
    })
}

/// True when every candidate is a single job and all of them are in the
/// same class, so any choice leads to the same plans.
fn interchangeable(state: &Buckets, candidates: &[usize], classes: &[usize]) -> bool {
    let class = |o: usize| classes[state.remaining_of(o)[0]];
    candidates.iter().all(|&o| state.count(o) == 1 && class(o) == class(candidates[0]))
}

/// Whether some option of the level above still has a real choice between
/// its children at this level.
fn may_branch(view: &LevelView, state: &Buckets, classes: &[usize]) -> bool {
    let mut by_parent: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for o in 0..view.n_options() {
        if state.count(o) > 0 {
            by_parent.entry(view.parent(o)).or_default().push(o);
        }
    }
    by_parent.values().any(|c| c.len() > 1 && !interchangeable(state, c, classes))
}

/// Highest mean among visited entries; ties go to more visits, then to the
/// earlier entry.
fn best_mean(items: impl Iterator<Item = (usize, Stats)>) -> Option<usize> {
    let mut best: Option<(usize, f64, u64)> = None;
    for (o, s) in items {
        if s.visits == 0 {
            continue;
        }
        let m = s.mean();
        let better = match best {
            None => true,
            Some((_, bm, bv)) => m > bm || (m == bm && s.visits > bv),
        };
        if better {
            best = Some((o, m, s.visits));
        }
    }
    best.map(|(o, _, _)| o)
}

#[allow(clippy::too_many_arguments)]
fn run_level(
    ctx: &LevelCtx<'_>,
    kind: Kind,
    level: usize,
    teams: &[Team],
    roots: &[Arc<Node>],
    flat_stats: &[Mutex<Vec<Stats>>],
    rngs: &mut [ChaCha8Rng],
    per_team: usize,
    budget: LevelBudget,
) -> u64 {
    let stops: Vec<Stop> = teams
        .iter()
        .map(|_| match budget {
            LevelBudget::Sims(s) => Stop::Sims { used: AtomicU64::new(0), limit: s * per_team as u64 },
            LevelBudget::Until(t) => Stop::Until(t),
        })
        .collect();
    if matches!(budget, LevelBudget::Sims(0)) {
        return 0;
    }
    let round_robin: Vec<AtomicUsize> = teams.iter().map(|_| AtomicUsize::new(0)).collect();

    let work = |w: usize, rng: &mut ChaCha8Rng| -> u64 {
        let t = w / per_team;
        match kind {
            Kind::Mcts => mcts_worker(ctx, &roots[t], &teams[t].histories[level], rng, &stops[t]),
            Kind::Flat => flat_worker(ctx, &flat_stats[t], &round_robin[t], rng, &stops[t]),
            Kind::Nmcs(lv) => NestedWorker { ctx, rng, stop: &stops[t], sims: 0, aborted: false }.run(lv),
        }
    };

    if rngs.len() == 1 {
        work(0, &mut rngs[0])
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = rngs
                .iter_mut()
                .enumerate()
                .map(|(w, rng)| {
                    let work = &work;
                    s.spawn(move || work(w, rng))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("search worker panicked")).sum()
        })
    }
}

fn mcts_worker(
    ctx: &LevelCtx<'_>,
    root: &Arc<Node>,
    history: &Mutex<BigramHistory>,
    rng: &mut ChaCha8Rng,
    stop: &Stop,
) -> u64 {
    let k = ctx.view.n_options();
    let mut state = ctx.state.clone();
    let mut plan: Vec<JobId> = Vec::with_capacity(ctx.view.n_jobs());
    let mut path: Vec<Arc<Node>> = Vec::new();
    let mut actions: Vec<usize> = Vec::new();
    let mut avail: Vec<usize> = Vec::new();
    let mut tried = vec![false; k];
    let mut untried: Vec<usize> = Vec::new();
    let mut sims = 0;

    while stop.take() {
        state.clone_from(ctx.state);
        plan.clear();
        plan.extend_from_slice(ctx.prefix);
        path.clear();
        path.push(root.clone());
        actions.clear();
        let mut prev = ctx.last;

        loop {
            let node = path.last().expect("path starts at the root").clone();
            if path.len() == 1 {
                avail.clear();
                avail.extend(ctx.candidates.iter().copied().filter(|&o| state.count(o) > 0));
            } else {
                state.available(&mut avail);
            }
            if avail.is_empty() {
                break;
            }
            let (next, expanded) = {
                let kids = node.children();
                if kids.len() < avail.len() {
                    for c in kids.iter() {
                        tried[c.action] = true;
                    }
                    untried.clear();
                    untried.extend(avail.iter().copied().filter(|&a| !tried[a]));
                    for c in kids.iter() {
                        tried[c.action] = false;
                    }
                    drop(kids);
                    let a = untried[rng.gen_range(0..untried.len())];
                    (node.expand(a), true)
                } else {
                    let n_p = node.stats().visits;
                    let hist = ctx.ph.then(|| history.lock());
                    let mut best: Option<(&Arc<Node>, f64)> = None;
                    for c in kids.iter() {
                        let s = c.stats();
                        let v = if s.visits == 0 {
                            f64::INFINITY
                        } else if let Some(h) = &hist {
                            uct_ph_value(s.mean(), s.visits, n_p, ctx.c, h.score(prev, c.action), ctx.w)
                        } else {
                            uct_value(s.mean(), s.visits, n_p, ctx.c)
                        };
                        if best.map_or(true, |(_, bv)| v > bv) {
                            best = Some((c, v));
                        }
                    }
                    (best.expect("fully expanded node has children").0.clone(), false)
                }
            };
            let a = next.action;
            plan.push(state.pop_random(a, rng));
            actions.push(a);
            prev = Some(a);
            path.push(next);
            if expanded {
                break;
            }
        }

        let tail = plan.len();
        state.rollout_into(rng, &mut plan);
        let score = ctx.ev.score(&plan);
        for n in &path {
            n.update(score);
        }
        ctx.best.offer(score, &plan);
        if ctx.ph {
            actions.extend(plan[tail..].iter().map(|&j| ctx.view.option_of(j)));
            history.lock().record_sequence(ctx.last, &actions, score);
        }
        sims += 1;
    }
    sims
}

fn flat_worker(
    ctx: &LevelCtx<'_>,
    stats: &Mutex<Vec<Stats>>,
    round_robin: &AtomicUsize,
    rng: &mut ChaCha8Rng,
    stop: &Stop,
) -> u64 {
    let mut state = ctx.state.clone();
    let mut plan: Vec<JobId> = Vec::with_capacity(ctx.view.n_jobs());
    let mut sims = 0;
    while stop.take() {
        let i = round_robin.fetch_add(1, Ordering::Relaxed) % ctx.candidates.len();
        state.clone_from(ctx.state);
        plan.clear();
        plan.extend_from_slice(ctx.prefix);
        plan.push(state.pop_random(ctx.candidates[i], rng));
        state.rollout_into(rng, &mut plan);
        let score = ctx.ev.score(&plan);
        {
            let mut s = stats.lock();
            s[i].visits += 1;
            s[i].sum += score;
        }
        ctx.best.offer(score, &plan);
        sims += 1;
    }
    sims
}

/// Nested Monte-Carlo search over the options of one level. The top level
/// keeps re-evaluating every candidate until the budget runs out; all
/// results go into the shared best plan, which decides the move.
struct NestedWorker<'a, 'b> {
    ctx: &'a LevelCtx<'b>,
    rng: &'a mut ChaCha8Rng,
    stop: &'a Stop,
    sims: u64,
    aborted: bool,
}

impl NestedWorker<'_, '_> {
    fn run(mut self, level: usize) -> u64 {
        while !self.aborted {
            for &c in self.ctx.candidates {
                let mut state = self.ctx.state.clone();
                let mut plan = self.ctx.prefix.to_vec();
                plan.push(state.pop_random(c, self.rng));
                self.nested(level - 1, state, plan);
                if self.aborted {
                    break;
                }
            }
        }
        self.sims
    }

    fn nested(&mut self, level: usize, mut state: Buckets, mut plan: Vec<JobId>) -> Option<(f64, Vec<JobId>)> {
        if level == 0 || state.is_empty() {
            if !self.stop.take() {
                self.aborted = true;
                return None;
            }
            state.rollout_into(self.rng, &mut plan);
            let score = self.ctx.ev.score(&plan);
            self.ctx.best.offer(score, &plan);
            self.sims += 1;
            return Some((score, plan));
        }
        let mut best: Option<(f64, Vec<JobId>)> = None;
        let mut avail = Vec::new();
        while !state.is_empty() {
            state.available(&mut avail);
            for &a in &avail {
                let mut s2 = state.clone();
                let mut p2 = plan.clone();
                p2.push(s2.pop_random(a, self.rng));
                let r = self.nested(level - 1, s2, p2);
                if let Some((score, seq)) = r {
                    if best.as_ref().map_or(true, |(b, _)| score > *b) {
                        best = Some((score, seq));
                    }
                }
                if self.aborted {
                    return best;
                }
            }
            let next = best.as_ref().expect("every move was evaluated").1[plan.len()];
            state.remove(self.ctx.view.option_of(next), next);
            plan.push(next);
        }
        best
    }
}
