//! Abstraction search: starting from mean-shift clusters, joins options ply
//! by ply, choosing each join by how well a Monte-Carlo search restricted
//! to the resulting top options plans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cluster::{default_bandwidth, mean_shift};
use super::{euclidean, job_features, AbstractionError, HNode, Nested, OptionHierarchy};
use crate::metrics::Evaluator;
use crate::model::{JobId, JobSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedConfig {
    /// Mean-shift bandwidth; `None` uses [`default_bandwidth`].
    pub bandwidth: Option<f64>,
    /// Greedy playouts averaged per join candidate.
    pub playouts_per_action: usize,
    /// Evaluator calls for the whole construction, shared evenly over plies
    /// and candidates. More calls let each playout decide more often.
    pub evaluations: u64,
    /// Joins considered per ply, nearest centroids first.
    pub max_actions: usize,
    /// Job sets up to this size are scored exactly instead of by playouts.
    pub exact_up_to: usize,
    pub seed: u64,
}

impl Default for IntegratedConfig {
    fn default() -> Self {
        Self {
            bandwidth: None,
            playouts_per_action: 8,
            evaluations: 0,
            max_actions: 16,
            exact_up_to: 6,
            seed: 0,
        }
    }
}

/// Evaluator calls the abstraction search may use so that it takes `ratio`
/// of the total effort, given the planning search's simulation count.
pub fn abstraction_budget(planning_simulations: u64, ratio: f64) -> u64 {
    let ratio = ratio.clamp(0.0, 0.95);
    (planning_simulations as f64 * ratio / (1.0 - ratio)).round() as u64
}

/// Hierarchy under construction: an arena plus the current top options.
#[derive(Debug, Clone)]
struct Forest {
    nodes: Vec<HNode>,
    /// Created by a join (may absorb further options).
    composite: Vec<bool>,
    leaves: Vec<usize>,
    centroid: Vec<Vec<f64>>,
    tops: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Join {
    Pair(usize, usize),
    /// Move top `from` under composite top `into`.
    Absorb { from: usize, into: usize },
}

impl Forest {
    fn push(&mut self, node: HNode, composite: bool, leaves: usize, centroid: Vec<f64>) -> usize {
        self.nodes.push(node);
        self.composite.push(composite);
        self.leaves.push(leaves);
        self.centroid.push(centroid);
        self.nodes.len() - 1
    }

    fn merged_centroid(&self, a: usize, b: usize) -> Vec<f64> {
        let (wa, wb) = (self.leaves[a] as f64, self.leaves[b] as f64);
        self.centroid[a]
            .iter()
            .zip(&self.centroid[b])
            .map(|(x, y)| (wa * x + wb * y) / (wa + wb))
            .collect()
    }

    fn actions(&self, max_actions: usize) -> Vec<Join> {
        let t = &self.tops;
        let mut acts: Vec<(f64, Join)> = Vec::new();
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                acts.push((euclidean(&self.centroid[t[i]], &self.centroid[t[j]]), Join::Pair(i, j)));
            }
        }
        for into in 0..t.len() {
            if !self.composite[t[into]] {
                continue;
            }
            for from in 0..t.len() {
                if from != into {
                    let d = euclidean(&self.centroid[t[from]], &self.centroid[t[into]]);
                    acts.push((d, Join::Absorb { from, into }));
                }
            }
        }
        // stable: equal distances keep the listing order
        acts.sort_by(|a, b| a.0.total_cmp(&b.0));
        acts.truncate(max_actions.max(1));
        acts.into_iter().map(|(_, a)| a).collect()
    }

    fn apply(&self, join: Join) -> Forest {
        let mut f = self.clone();
        match join {
            Join::Pair(i, j) => {
                let (a, b) = (f.tops[i], f.tops[j]);
                let c = f.merged_centroid(a, b);
                let id = f.push(HNode::Option(vec![a, b]), true, f.leaves[a] + f.leaves[b], c);
                f.tops.remove(j);
                f.tops[i] = id;
            }
            Join::Absorb { from, into } => {
                let (a, b) = (f.tops[from], f.tops[into]);
                f.centroid[b] = f.merged_centroid(b, a);
                f.leaves[b] += f.leaves[a];
                if let HNode::Option(kids) = &mut f.nodes[b] {
                    kids.push(a);
                }
                f.tops.remove(from);
            }
        }
        f
    }

    fn to_nested(&self, id: usize) -> Nested {
        match &self.nodes[id] {
            HNode::Leaf(j) => Nested::Job(*j),
            HNode::Option(k) => Nested::Group(k.iter().map(|&c| self.to_nested(c)).collect()),
        }
    }

    fn hierarchy(&self) -> Result<OptionHierarchy, AbstractionError> {
        let nested = if self.tops.len() == 1 {
            self.to_nested(self.tops[0])
        } else {
            Nested::Group(self.tops.iter().map(|&t| self.to_nested(t)).collect())
        };
        Ok(OptionHierarchy::from_nested(&nested)?)
    }
}

/// Plans drawn through a forest. Below the top level every choice is a
/// uniformly random child that still has jobs; the top options sit under an
/// implicit root.
struct Sampler {
    /// Children per node; the last entry is the implicit root.
    kids: Vec<Vec<usize>>,
    leaves: Vec<usize>,
    parent: Vec<usize>,
    job: Vec<Option<JobId>>,
    leaf_of: Vec<usize>,
    root: usize,
}

/// Remaining children and job counts while a plan is being drawn.
#[derive(Clone)]
struct Walk {
    kids: Vec<Vec<usize>>,
    left: Vec<usize>,
}

impl Sampler {
    fn new(f: &Forest) -> Self {
        let mut kids: Vec<Vec<usize>> = f
            .nodes
            .iter()
            .map(|n| match n {
                HNode::Leaf(_) => Vec::new(),
                HNode::Option(k) => k.clone(),
            })
            .collect();
        kids.push(f.tops.clone());
        let mut root = kids.len() - 1;
        // a lone top option is the root itself
        if let [top] = f.tops[..] {
            if !kids[top].is_empty() {
                root = top;
            }
        }
        let mut parent = vec![root; kids.len()];
        for (p, ks) in kids.iter().enumerate() {
            for &k in ks {
                parent[k] = p;
            }
        }
        let mut leaves = f.leaves.clone();
        leaves.push(f.tops.iter().map(|&t| f.leaves[t]).sum());
        let mut job: Vec<Option<JobId>> = f
            .nodes
            .iter()
            .map(|n| match n {
                HNode::Leaf(j) => Some(*j),
                HNode::Option(_) => None,
            })
            .collect();
        job.push(None);
        let mut leaf_of = vec![0; leaves[root]];
        for (id, j) in job.iter().enumerate() {
            if let Some(j) = j {
                leaf_of[*j] = id;
            }
        }
        Self { kids, leaves, parent, job, leaf_of, root }
    }

    fn start(&self) -> Walk {
        Walk { kids: self.kids.clone(), left: self.leaves.clone() }
    }

    fn n_jobs(&self) -> usize {
        self.leaves[self.root]
    }

    fn remove(&self, w: &mut Walk, job: JobId) {
        let mut node = self.leaf_of[job];
        w.left[node] -= 1;
        while node != self.root {
            let p = self.parent[node];
            w.left[p] -= 1;
            if w.left[node] == 0 {
                let i = w.kids[p].iter().position(|&k| k == node).expect("child still listed");
                w.kids[p].swap_remove(i);
            }
            node = p;
        }
    }

    /// Draws one job below top option `top` (an index into the remaining
    /// top options) and appends it.
    fn step(&self, w: &mut Walk, top: usize, rng: &mut impl Rng, plan: &mut Vec<JobId>) {
        let mut node = w.kids[self.root][top];
        while self.job[node].is_none() {
            node = w.kids[node][rng.gen_range(0..w.kids[node].len())];
        }
        let j = self.job[node].expect("leaf");
        self.remove(w, j);
        plan.push(j);
    }

    fn rollout(&self, w: &mut Walk, rng: &mut impl Rng, plan: &mut Vec<JobId>) {
        while w.left[self.root] > 0 {
            let top = rng.gen_range(0..w.kids[self.root].len());
            self.step(w, top, rng, plan);
        }
    }

    /// Greedy search over the top options: every decision tries each top
    /// option with one random completion and keeps the next `stride` jobs
    /// of the best completion. Returns the score of the resulting plan.
    fn playout(&self, ev: &dyn Evaluator, stride: usize, rng: &mut impl Rng) -> f64 {
        let n = self.n_jobs();
        let mut w = self.start();
        let mut plan = Vec::with_capacity(n);
        let mut trial = Vec::with_capacity(n);
        let mut best_seq = Vec::with_capacity(n);
        while w.left[self.root] > 0 {
            let width = w.kids[self.root].len();
            if width == 1 {
                self.rollout(&mut w, rng, &mut plan);
                break;
            }
            let mut best = f64::NEG_INFINITY;
            for top in 0..width {
                let mut w2 = w.clone();
                trial.clear();
                trial.extend_from_slice(&plan);
                self.step(&mut w2, top, rng, &mut trial);
                self.rollout(&mut w2, rng, &mut trial);
                let s = ev.score(&trial);
                if s > best {
                    best = s;
                    std::mem::swap(&mut best_seq, &mut trial);
                }
            }
            let upto = (plan.len() + stride.max(1)).min(n);
            if upto == n {
                return best;
            }
            for i in plan.len()..upto {
                self.remove(&mut w, best_seq[i]);
                plan.push(best_seq[i]);
            }
        }
        ev.score(&plan)
    }

    /// Best expected score reachable by choosing the top option at every
    /// step, with the jobs below drawn at random. Enumerates everything, so
    /// only usable for a handful of jobs.
    fn exact(&self, ev: &dyn Evaluator) -> f64 {
        fn value(s: &Sampler, ev: &dyn Evaluator, w: &Walk, plan: &mut Vec<JobId>) -> f64 {
            if w.left[s.root] == 0 {
                return ev.score(plan);
            }
            let mut best = f64::NEG_INFINITY;
            for &top in &w.kids[s.root] {
                // every leaf below `top` with the probability of reaching it
                let mut outcomes = Vec::new();
                let mut stack = vec![(top, 1.0)];
                while let Some((node, p)) = stack.pop() {
                    match s.job[node] {
                        Some(j) => outcomes.push((j, p)),
                        None => {
                            let m = w.kids[node].len() as f64;
                            stack.extend(w.kids[node].iter().map(|&k| (k, p / m)));
                        }
                    }
                }
                let mut expected = 0.0;
                for (j, p) in outcomes {
                    let mut w2 = w.clone();
                    s.remove(&mut w2, j);
                    plan.push(j);
                    expected += p * value(s, ev, &w2, plan);
                    plan.pop();
                }
                best = best.max(expected);
            }
            best
        }
        value(self, ev, &self.start(), &mut Vec::new())
    }
}

/// Builds a hierarchy by abstraction search. Mean-shift clusters become the
/// initial options; each ply either pairs two top options under a new
/// option or moves one into an option the search created earlier. Each
/// candidate is scored by greedy playouts over its top options, and the
/// best one is kept. Ties go to the flatter result.
pub fn integrated_abstraction(
    jobs: &JobSet,
    ev: &dyn Evaluator,
    cfg: &IntegratedConfig,
) -> Result<OptionHierarchy, AbstractionError> {
    let n = jobs.len();
    if n == 0 {
        return Err(AbstractionError::NoJobs);
    }
    if n == 1 {
        return Ok(OptionHierarchy::single(0));
    }
    let features = job_features(jobs);
    let bw = cfg.bandwidth.unwrap_or_else(|| default_bandwidth(&features));
    let clusters = mean_shift(&features, bw)?;
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);

    let mut f = Forest { nodes: Vec::new(), composite: Vec::new(), leaves: Vec::new(), centroid: Vec::new(), tops: Vec::new() };
    let leaf_ids: Vec<usize> = (0..n).map(|j| f.push(HNode::Leaf(j), false, 1, features[j].clone())).collect();
    for c in 0..n_clusters {
        let members: Vec<usize> = (0..n).filter(|&j| clusters[j] == c).collect();
        let top = if members.len() == 1 {
            leaf_ids[members[0]]
        } else {
            let dim = features[0].len();
            let mut centroid = vec![0.0; dim];
            for &j in &members {
                for (c, v) in centroid.iter_mut().zip(&features[j]) {
                    *c += v / members.len() as f64;
                }
            }
            f.push(HNode::Option(members.iter().map(|&j| leaf_ids[j]).collect()), false, members.len(), centroid)
        };
        f.tops.push(top);
    }

    let exact = n <= cfg.exact_up_to;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plies = f.tops.len().saturating_sub(1).max(1) as u64;
    let per_ply = cfg.evaluations / plies;
    let playouts = cfg.playouts_per_action.max(1);

    while f.tops.len() > 1 {
        let candidates: Vec<(Join, Forest)> =
            f.actions(cfg.max_actions).into_iter().map(|a| (a, f.apply(a))).collect();
        let per_playout = per_ply / (candidates.len() * playouts) as u64;
        let means: Vec<f64> = candidates
            .iter()
            .map(|(_, g)| {
                let s = Sampler::new(g);
                if exact {
                    return s.exact(ev);
                }
                // a decision costs one evaluation per top option
                let decisions = (per_playout / g.tops.len() as u64).clamp(1, n as u64) as usize;
                let stride = n.div_ceil(decisions);
                (0..playouts).map(|_| s.playout(ev, stride, &mut rng)).sum::<f64>() / playouts as f64
            })
            .collect();
        let mut pick = 0;
        for i in 1..candidates.len() {
            let tie = (means[i] - means[pick]).abs() <= 1e-12;
            let flatter = matches!(candidates[i].0, Join::Absorb { .. })
                && matches!(candidates[pick].0, Join::Pair(..));
            if (!tie && means[i] > means[pick]) || (tie && flatter) {
                pick = i;
            }
        }
        f = candidates.into_iter().nth(pick).expect("picked a candidate").1;
    }
    f.hierarchy()
}
