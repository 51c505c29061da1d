//! Views of the job set at one level of an option hierarchy, and the
//! remaining-job state the searches walk over.

use rand::Rng;

use crate::abstraction::{HierarchyError, OptionHierarchy};
use crate::model::JobId;

/// Jobs grouped by their ancestor at one depth of the hierarchy. Searching at
/// this level means choosing options; playing an option appends one of its
/// remaining jobs, drawn at random.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelView {
    option_of: Vec<usize>,
    /// Option at the level above containing each option.
    parent: Vec<usize>,
    n_options: usize,
}

impl LevelView {
    /// Every job is its own option.
    pub fn identity(n_jobs: usize) -> Self {
        Self {
            option_of: (0..n_jobs).collect(),
            parent: vec![0; n_jobs],
            n_options: n_jobs,
        }
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn n_jobs(&self) -> usize {
        self.option_of.len()
    }

    pub fn option_of(&self, job: JobId) -> usize {
        self.option_of[job]
    }

    pub fn parent(&self, option: usize) -> usize {
        self.parent[option]
    }
}

/// One view per hierarchy depth, coarsest first. The last view always maps
/// job `j` to option `j`. A single-job hierarchy has no levels.
pub fn level_views(h: &OptionHierarchy, n_jobs: usize) -> Result<Vec<LevelView>, HierarchyError> {
    let paths = h.paths(n_jobs)?;
    let height = h.height();
    let mut views: Vec<LevelView> = Vec::with_capacity(height);
    for level in 1..=height {
        let cut: Vec<usize> = paths.iter().map(|p| p[level.min(p.len() - 1)]).collect();
        // number options by their smallest job, i.e. first appearance by id
        let mut index_of_node = std::collections::HashMap::new();
        let mut option_of = Vec::with_capacity(n_jobs);
        for &node in &cut {
            let next = index_of_node.len();
            option_of.push(*index_of_node.entry(node).or_insert(next));
        }
        let n_options = index_of_node.len();
        let mut parent = vec![0; n_options];
        if let Some(above) = views.last() {
            for j in 0..n_jobs {
                parent[option_of[j]] = above.option_of[j];
            }
        }
        views.push(LevelView { option_of, parent, n_options });
    }
    Ok(views)
}

/// Remaining jobs bucketed by option. Buckets share one flat array so the
/// whole state is cheap to copy per simulation.
#[derive(Debug, PartialEq, Eq)]
pub struct Buckets {
    jobs: Vec<JobId>,
    start: Vec<usize>,
    len: Vec<usize>,
    total: usize,
}

impl Clone for Buckets {
    fn clone(&self) -> Self {
        Self {
            jobs: self.jobs.clone(),
            start: self.start.clone(),
            len: self.len.clone(),
            total: self.total,
        }
    }

    // reuses the allocations, this runs once per simulation
    fn clone_from(&mut self, source: &Self) {
        self.jobs.clone_from(&source.jobs);
        self.start.clone_from(&source.start);
        self.len.clone_from(&source.len);
        self.total = source.total;
    }
}

impl Buckets {
    pub fn new(view: &LevelView, remaining: &[JobId]) -> Self {
        let k = view.n_options();
        let mut len = vec![0; k];
        for &j in remaining {
            len[view.option_of(j)] += 1;
        }
        let mut start = vec![0; k];
        for o in 1..k {
            start[o] = start[o - 1] + len[o - 1];
        }
        let mut fill = start.clone();
        let mut jobs = vec![0; remaining.len()];
        for &j in remaining {
            let o = view.option_of(j);
            jobs[fill[o]] = j;
            fill[o] += 1;
        }
        Self { jobs, start, len, total: remaining.len() }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, option: usize) -> usize {
        self.len[option]
    }

    pub fn remaining_of(&self, option: usize) -> &[JobId] {
        &self.jobs[self.start[option]..self.start[option] + self.len[option]]
    }

    /// Options that still have jobs, ascending.
    pub fn available(&self, out: &mut Vec<usize>) {
        out.clear();
        out.extend((0..self.len.len()).filter(|&o| self.len[o] > 0));
    }

    /// Removes and returns a random remaining job of `option`.
    pub fn pop_random(&mut self, option: usize, rng: &mut impl Rng) -> JobId {
        let n = self.len[option];
        debug_assert!(n > 0, "option {option} is exhausted");
        let i = if n == 1 { 0 } else { rng.gen_range(0..n) };
        self.take_at(option, i)
    }

    /// Removes a specific job. Returns false when it is not remaining.
    pub fn remove(&mut self, option: usize, job: JobId) -> bool {
        match self.remaining_of(option).iter().position(|&j| j == job) {
            Some(i) => {
                self.take_at(option, i);
                true
            }
            None => false,
        }
    }

    fn take_at(&mut self, option: usize, i: usize) -> JobId {
        let s = self.start[option];
        let last = s + self.len[option] - 1;
        self.jobs.swap(s + i, last);
        self.len[option] -= 1;
        self.total -= 1;
        self.jobs[last]
    }

    /// Appends all remaining jobs in uniformly random order.
    pub fn rollout_into(&self, rng: &mut impl Rng, out: &mut Vec<JobId>) {
        use rand::seq::SliceRandom;
        let from = out.len();
        for o in 0..self.len.len() {
            out.extend_from_slice(self.remaining_of(o));
        }
        out[from..].shuffle(rng);
    }
}
