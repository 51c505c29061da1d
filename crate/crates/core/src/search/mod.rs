//! The Monte-Carlo search family.
//!
//! Every search builds the plan one position at a time: it spends a budget
//! of simulations on the current state, commits one job and moves on.
//! Plain searches are the hierarchical ones run over a flat hierarchy, so
//! one engine drives all of them:
//!
//! * flat Monte-Carlo search: round-robin rollouts for each candidate,
//! * MCTS with UCT selection (optionally with bigram progressive history),
//! * nested Monte-Carlo search of a given level,
//! * H-MCTS / H-NMCS, which descend an [`OptionHierarchy`] level by level
//!   and only ever branch over the options of the current level.

mod engine;
pub mod history;
pub mod levels;
pub mod tree;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::abstraction::{HierarchyError, OptionHierarchy};
use crate::metrics::Evaluator;
use crate::model::Plan;

pub use history::BigramHistory;
pub use levels::{level_views, Buckets, LevelView};
pub use tree::{Node, Stats};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("hierarchy does not match the job set: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("parallel search needs at least one thread")]
    ZeroThreads,
    #[error("nesting level must be at least 1")]
    ZeroLevel,
}

/// UCT selection value: mean score plus exploration bonus.
pub fn uct_value(s: f64, n_i: u64, n_p: u64, c: f64) -> f64 {
    s + c * ((n_p.max(1) as f64).ln() / n_i as f64).sqrt()
}

/// [`uct_value`] plus the progressive-history bias `s_a * W / (n_i - s + 1)`.
pub fn uct_ph_value(s: f64, n_i: u64, n_p: u64, c: f64, s_a: f64, w: f64) -> f64 {
    uct_value(s, n_i, n_p, c) + s_a * w / (n_i as f64 - s + 1.0)
}

/// Base time per step and the number of steps it is spread over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub base: Duration,
    pub total_jobs: usize,
}

/// Multiplier of the base budget at step `d`: early steps get more time,
/// late steps (few jobs left) less.
pub fn redistribution_factor(d: usize, total_jobs: usize) -> f64 {
    if total_jobs == 0 {
        return 1.0;
    }
    1.9 - 1.8 * d as f64 / total_jobs as f64
}

pub fn time_for_step(d: usize, budget: &SearchBudget) -> Duration {
    budget.base.mul_f64(redistribution_factor(d, budget.total_jobs).max(0.0))
}

/// Search effort per committed job and per worker thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Time(Duration),
    Simulations(u64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Enhancements {
    pub time_redistribution: bool,
    pub best_path: bool,
    pub progressive_history: bool,
}

impl Enhancements {
    pub fn all() -> Self {
        Self { time_redistribution: true, best_path: true, progressive_history: true }
    }
}

impl fmt::Display for Enhancements {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.time_redistribution {
            parts.push("tr");
        }
        if self.best_path {
            parts.push("bp");
        }
        if self.progressive_history {
            parts.push("ph");
        }
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Serial,
    /// Independent trees, one per thread, synchronised after every step.
    Root(usize),
    /// One shared tree grown by several threads.
    Tree(usize),
}

impl Parallelism {
    pub fn threads(self) -> usize {
        match self {
            Parallelism::Serial => 1,
            Parallelism::Root(t) | Parallelism::Tree(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Exploration constant.
    pub c: f64,
    /// Progressive-history weight.
    pub w: f64,
    pub budget: Budget,
    pub enhancements: Enhancements,
    pub parallelism: Parallelism,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            c: 0.5,
            w: 5.0,
            budget: Budget::Simulations(100),
            enhancements: Enhancements::default(),
            parallelism: Parallelism::Serial,
            seed: 0,
        }
    }
}

/// Shape of the search trees, for plotting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    /// Largest number of tree nodes seen at each absolute plan depth.
    pub widths: Vec<usize>,
    /// Simulations spent per committed position.
    pub step_simulations: Vec<u64>,
    /// Visits of the top-level root after each step's search.
    pub root_visits: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub plan: Plan,
    /// Evaluator score of `plan`.
    pub score: f64,
    /// Best score of any complete plan evaluated during the search.
    pub best_score: f64,
    pub simulations: u64,
    pub trace: SearchTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    FlatMcs,
    Mcts,
    Nmcs,
    HMcts,
    HNmcs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::FlatMcs, Algorithm::Mcts, Algorithm::Nmcs, Algorithm::HMcts, Algorithm::HNmcs];

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Algorithm::HMcts | Algorithm::HNmcs)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::FlatMcs => "flat",
            Algorithm::Mcts => "mcts",
            Algorithm::Nmcs => "nmcs",
            Algorithm::HMcts => "hmcts",
            Algorithm::HNmcs => "hnmcs",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "flat" | "flatmcs" => Ok(Algorithm::FlatMcs),
            "mcts" => Ok(Algorithm::Mcts),
            "nmcs" => Ok(Algorithm::Nmcs),
            "hmcts" => Ok(Algorithm::HMcts),
            "hnmcs" => Ok(Algorithm::HNmcs),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

fn flat_views(n: usize) -> Vec<LevelView> {
    if n <= 1 {
        Vec::new()
    } else {
        vec![LevelView::identity(n)]
    }
}

pub fn flat_mcs_plan(ev: &dyn Evaluator, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    engine::run(ev, &flat_views(ev.n_jobs()), engine::Kind::Flat, cfg)
}

pub fn mcts_plan(ev: &dyn Evaluator, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    engine::run(ev, &flat_views(ev.n_jobs()), engine::Kind::Mcts, cfg)
}

pub fn nmcs_plan(ev: &dyn Evaluator, level: usize, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    if level == 0 {
        return Err(SearchError::ZeroLevel);
    }
    engine::run(ev, &flat_views(ev.n_jobs()), engine::Kind::Nmcs(level), cfg)
}

pub fn hmcts_plan(
    ev: &dyn Evaluator,
    hierarchy: &OptionHierarchy,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    let views = level_views(hierarchy, ev.n_jobs())?;
    engine::run(ev, &views, engine::Kind::Mcts, cfg)
}

pub fn hnmcs_plan(
    ev: &dyn Evaluator,
    hierarchy: &OptionHierarchy,
    level: usize,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    if level == 0 {
        return Err(SearchError::ZeroLevel);
    }
    let views = level_views(hierarchy, ev.n_jobs())?;
    engine::run(ev, &views, engine::Kind::Nmcs(level), cfg)
}

/// Runs `algorithm`. Hierarchical variants need a hierarchy; the others
/// ignore it. `nmcs_level` applies to NMCS and H-NMCS.
pub fn run_algorithm(
    algorithm: Algorithm,
    ev: &dyn Evaluator,
    hierarchy: Option<&OptionHierarchy>,
    nmcs_level: usize,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    let flat;
    let h = match hierarchy {
        Some(h) => h,
        None => {
            flat = OptionHierarchy::flat(ev.n_jobs().max(1));
            &flat
        }
    };
    match algorithm {
        Algorithm::FlatMcs => flat_mcs_plan(ev, cfg),
        Algorithm::Mcts => mcts_plan(ev, cfg),
        Algorithm::Nmcs => nmcs_plan(ev, nmcs_level, cfg),
        Algorithm::HMcts => hmcts_plan(ev, h, cfg),
        Algorithm::HNmcs => hnmcs_plan(ev, h, nmcs_level, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallelMode {
    Root,
    Tree,
}

/// `run_algorithm` with root or tree parallelisation over `threads`.
pub fn parallel_search(
    mode: ParallelMode,
    threads: usize,
    algorithm: Algorithm,
    ev: &dyn Evaluator,
    hierarchy: Option<&OptionHierarchy>,
    nmcs_level: usize,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    if threads == 0 {
        return Err(SearchError::ZeroThreads);
    }
    let parallelism = match mode {
        ParallelMode::Root => Parallelism::Root(threads),
        ParallelMode::Tree => Parallelism::Tree(threads),
    };
    run_algorithm(algorithm, ev, hierarchy, nmcs_level, &SearchConfig { parallelism, ..*cfg })
}
