//! Experiment configuration: a plain `key = value` text file.
//!
//! ```text
//! # Problem 1 at desk scale
//! problem = problem1
//! jobs = 200
//! seeds = 10
//! algorithms = flat, mcts, nmcs, hmcts, hnmcs, spt
//! enhancements = none
//! budget = time_ms:500
//! expect = hmcts < mcts
//! ```
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `problem` | `problem1` | `problem1`, `problem2` or `problem3` |
//! | `jobs` | 200 | jobs per instance |
//! | `machines` | 10 | machines (problem2) or machine groups (problem3) |
//! | `instances` | 1 | instances, generated with seeds 0.. |
//! | `seeds` | 10 | search runs per instance, seeds 0.. |
//! | `algorithms` | `mcts` | search algorithms and baseline rules (`spt`, `lpt`, `edd`, `random`) |
//! | `enhancements` | `none` | comma list of sets such as `tr+bp+ph+root:4` |
//! | `budget` | `time_ms:500` | per committed job: `time_ms:N` or `sims:N` |
//! | `objective` | `makespan` | `makespan`, `lmax`, `total_lateness` or `mixed` |
//! | `dispatcher` | by problem | `online`, `offline` or `resource` |
//! | `abstraction` | `integrated` | hierarchy for `hmcts`/`hnmcs`: `integrated`, `detached` or `flat` |
//! | `abstraction_ratio` | 0.2 | share of the effort spent building the integrated hierarchy |
//! | `nmcs_level` | 2 | nesting level of NMCS and H-NMCS |
//! | `c` | 0.5 | exploration constant |
//! | `due_t`, `due_r` | 0.2, 0.8 | due-date factors of problem2 |
//! | `workers` | 1 | experiment cells run at once |
//! | `expect` | none | repeatable `A < B` or `A <= B` check on mean ratios |
//!
//! In `expect`, a term is a number, an algorithm name (matching any
//! enhancement set) or `algorithm/enhancements`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use bbplan_core::metrics::Objective;
use bbplan_core::schedulers::Rule;
use bbplan_core::search::{Algorithm, Budget, Enhancements, Parallelism};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("key `{0}` given more than once")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Problem1,
    Problem2,
    Problem3,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Problem1 => "problem1",
            Problem::Problem2 => "problem2",
            Problem::Problem3 => "problem3",
        })
    }
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "problem1" | "1" => Ok(Problem::Problem1),
            "problem2" | "2" => Ok(Problem::Problem2),
            "problem3" | "3" => Ok(Problem::Problem3),
            other => Err(format!("unknown problem `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatcherKind {
    Online,
    Offline,
    Resource,
}

impl FromStr for DispatcherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "online" => Ok(DispatcherKind::Online),
            "offline" => Ok(DispatcherKind::Offline),
            "resource" => Ok(DispatcherKind::Resource),
            other => Err(format!("unknown dispatcher `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstractionKind {
    Integrated,
    Detached,
    Flat,
}

impl FromStr for AbstractionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "integrated" => Ok(AbstractionKind::Integrated),
            "detached" => Ok(AbstractionKind::Detached),
            "flat" => Ok(AbstractionKind::Flat),
            other => Err(format!("unknown abstraction `{other}`")),
        }
    }
}

/// A search algorithm or a baseline ordering rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Search(Algorithm),
    Baseline(Rule),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Search(a) => a.fmt(f),
            Method::Baseline(r) => r.fmt(f),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Algorithm>()
            .map(Method::Search)
            .or_else(|_| s.parse::<Rule>().map(Method::Baseline))
            .map_err(|_| format!("unknown algorithm `{s}`"))
    }
}

/// Enhancements plus the parallelisation they run with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Variant {
    pub enhancements: Enhancements,
    pub parallelism: Parallelism,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = self.enhancements.to_string();
        match self.parallelism {
            Parallelism::Serial => f.write_str(&base),
            Parallelism::Root(t) | Parallelism::Tree(t) => {
                let mode = if matches!(self.parallelism, Parallelism::Root(_)) { "root" } else { "tree" };
                if base == "none" {
                    write!(f, "{mode}:{t}")
                } else {
                    write!(f, "{base}+{mode}:{t}")
                }
            }
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut v = Variant::default();
        for tok in s.split('+').map(str::trim) {
            let threads = |t: &str| t.parse::<usize>().ok().filter(|&n| n > 0).ok_or(format!("bad thread count `{t}`"));
            match tok.to_ascii_lowercase().as_str() {
                "none" | "" => {}
                "tr" => v.enhancements.time_redistribution = true,
                "bp" => v.enhancements.best_path = true,
                "ph" => v.enhancements.progressive_history = true,
                "all" => v.enhancements = Enhancements::all(),
                t if t.starts_with("root:") => v.parallelism = Parallelism::Root(threads(&t[5..])?),
                t if t.starts_with("tree:") => v.parallelism = Parallelism::Tree(threads(&t[5..])?),
                other => return Err(format!("unknown enhancement `{other}`")),
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Less,
    LessOrEqual,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Number(f64),
    /// Algorithm name, optionally with an enhancement label.
    Label(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Number(x) => write!(f, "{x}"),
            Term::Label(l) => f.write_str(l),
        }
    }
}

/// `left < right` or `left <= right` over mean ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub left: Term,
    pub op: Comparison,
    pub right: Term,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = if self.op == Comparison::Less { "<" } else { "<=" };
        write!(f, "{} {op} {}", self.left, self.right)
    }
}

impl FromStr for Expectation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (at, op, width) = match (s.find("<="), s.find('<')) {
            (Some(i), _) => (i, Comparison::LessOrEqual, 2),
            (None, Some(i)) => (i, Comparison::Less, 1),
            _ => return Err(format!("`{s}` has no `<` or `<=`")),
        };
        let term = |t: &str| {
            let t = t.trim();
            if t.is_empty() {
                return Err(format!("`{s}` is missing a side"));
            }
            Ok(t.parse::<f64>().map(Term::Number).unwrap_or_else(|_| Term::Label(t.to_ascii_lowercase())))
        };
        Ok(Self { left: term(&s[..at])?, op, right: term(&s[at + width..])? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub jobs: usize,
    pub machines: usize,
    pub instances: usize,
    pub seeds: usize,
    pub methods: Vec<Method>,
    pub variants: Vec<Variant>,
    pub budget: Budget,
    pub objective: Objective,
    pub dispatcher: DispatcherKind,
    pub abstraction: AbstractionKind,
    pub abstraction_ratio: f64,
    pub nmcs_level: usize,
    pub c: f64,
    pub due_t: f64,
    pub due_r: f64,
    pub workers: usize,
    pub expectations: Vec<Expectation>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Problem1,
            jobs: 200,
            machines: 10,
            instances: 1,
            seeds: 10,
            methods: vec![Method::Search(Algorithm::Mcts)],
            variants: vec![Variant::default()],
            budget: Budget::Time(Duration::from_millis(500)),
            objective: Objective::Makespan,
            dispatcher: DispatcherKind::Online,
            abstraction: AbstractionKind::Integrated,
            abstraction_ratio: 0.2,
            nmcs_level: 2,
            c: 0.5,
            due_t: 0.2,
            due_r: 0.8,
            workers: 1,
            expectations: Vec::new(),
        }
    }
}

pub fn parse_budget(s: &str) -> Result<Budget, String> {
    let (kind, n) = s.split_once(':').ok_or(format!("expected `time_ms:N` or `sims:N`, got `{s}`"))?;
    let n: u64 = n.trim().parse().map_err(|_| format!("bad number in `{s}`"))?;
    match kind.trim() {
        "time_ms" => Ok(Budget::Time(Duration::from_millis(n))),
        "sims" => Ok(Budget::Simulations(n)),
        other => Err(format!("unknown budget kind `{other}`")),
    }
}

pub fn budget_label(b: &Budget) -> String {
    match b {
        Budget::Time(d) => format!("time_ms:{}", d.as_millis()),
        Budget::Simulations(n) => format!("sims:{n}"),
    }
}

fn list<T: FromStr<Err = String>>(v: &str) -> Result<Vec<T>, String> {
    let items: Vec<T> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn number<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        let mut expectations = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "expect" {
                expectations.push(v);
            } else if values.insert(k.clone(), v).is_some() {
                return Err(ConfigError::Duplicate(k));
            }
        }
        const KEYS: [&str; 17] = [
            "problem",
            "jobs",
            "machines",
            "instances",
            "seeds",
            "algorithms",
            "enhancements",
            "budget",
            "objective",
            "dispatcher",
            "abstraction",
            "abstraction_ratio",
            "nmcs_level",
            "c",
            "due_t",
            "due_r",
            "workers",
        ];
        let unknown: Vec<String> = values.keys().filter(|k| !KEYS.contains(&k.as_str())).cloned().collect();
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }

        let mut cfg = ExperimentConfig::default();
        let err = |key: &str| {
            let key = key.to_string();
            move |message: String| ConfigError::Value { key: key.clone(), message }
        };
        if let Some(v) = values.get("problem") {
            cfg.problem = v.parse().map_err(err("problem"))?;
        }
        cfg.dispatcher = match cfg.problem {
            Problem::Problem1 => DispatcherKind::Online,
            Problem::Problem2 => DispatcherKind::Offline,
            Problem::Problem3 => DispatcherKind::Resource,
        };
        for (key, v) in &values {
            let e = err(key);
            match key.as_str() {
                "problem" => {}
                "jobs" => cfg.jobs = number(v).map_err(e)?,
                "machines" => cfg.machines = number(v).map_err(e)?,
                "instances" => cfg.instances = number(v).map_err(e)?,
                "seeds" => cfg.seeds = number(v).map_err(e)?,
                "algorithms" => cfg.methods = list(v).map_err(e)?,
                "enhancements" => cfg.variants = list(v).map_err(e)?,
                "budget" => cfg.budget = parse_budget(v).map_err(e)?,
                "objective" => cfg.objective = v.parse().map_err(|m: String| e(m))?,
                "dispatcher" => cfg.dispatcher = v.parse().map_err(e)?,
                "abstraction" => cfg.abstraction = v.parse().map_err(e)?,
                "abstraction_ratio" => cfg.abstraction_ratio = number(v).map_err(e)?,
                "nmcs_level" => cfg.nmcs_level = number(v).map_err(e)?,
                "c" => cfg.c = number(v).map_err(e)?,
                "due_t" => cfg.due_t = number(v).map_err(e)?,
                "due_r" => cfg.due_r = number(v).map_err(e)?,
                "workers" => cfg.workers = number(v).map_err(e)?,
                _ => unreachable!("keys checked above"),
            }
        }
        for (key, n) in [("jobs", cfg.jobs), ("instances", cfg.instances), ("seeds", cfg.seeds), ("workers", cfg.workers)] {
            if n == 0 {
                return Err(err(key)("must be positive".into()));
            }
        }
        if !(0.0..1.0).contains(&cfg.abstraction_ratio) {
            return Err(err("abstraction_ratio")("must be in [0, 1)".into()));
        }
        cfg.expectations = expectations
            .iter()
            .map(|e| e.parse())
            .collect::<Result<_, String>>()
            .map_err(err("expect"))?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// Full-size Problem 1 settings: 2000 jobs and ten seconds per step.
    pub fn full_scale(mut self) -> Self {
        if self.problem == Problem::Problem1 {
            self.jobs = 2000;
        }
        self.budget = Budget::Time(Duration::from_secs(10));
        self
    }
}
