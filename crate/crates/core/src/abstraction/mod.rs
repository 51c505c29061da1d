//! Job abstraction: grouping similar jobs into options so the search can
//! branch over a few options instead of every remaining job.
//!
//! [`detached_abstraction`] clusters job features before any search runs.
//! [`integrated_abstraction`] starts from mean-shift clusters and lets
//! Monte-Carlo evaluation decide how to join them.

mod cluster;
mod hierarchy;
mod integrated;

use thiserror::Error;

use crate::model::{JobSet, Time};

pub use cluster::{detached_abstraction, default_bandwidth, mean_shift};
pub use hierarchy::{HNode, HierarchyBuilder, HierarchyError, Nested, OptionHierarchy};
pub use integrated::{abstraction_budget, integrated_abstraction, IntegratedConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbstractionError {
    #[error("feature vectors differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("no jobs to abstract")]
    NoJobs,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Feature vector of one job.
pub type JobFeatures = Vec<f64>;

/// Per job: total processing time, deadline (or the horizon bound when the
/// job has none), then a one-hot of the rack types present in the set.
pub fn job_features(jobs: &JobSet) -> Vec<JobFeatures> {
    let horizon: Time = jobs.jobs().iter().map(|j| j.total_processing()).sum();
    let mut racks: Vec<u32> = jobs.jobs().iter().filter_map(|j| j.rack_type).collect();
    racks.sort_unstable();
    racks.dedup();
    jobs.jobs()
        .iter()
        .map(|j| {
            let mut f = Vec::with_capacity(2 + racks.len());
            f.push(j.total_processing() as f64);
            f.push(j.deadline.unwrap_or(horizon) as f64);
            f.extend(racks.iter().map(|&r| if j.rack_type == Some(r) { 1.0 } else { 0.0 }));
            f
        })
        .collect()
}

pub fn pairwise_distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64, AbstractionError> {
    if a.len() != b.len() {
        return Err(AbstractionError::DimensionMismatch(a.len(), b.len()));
    }
    match metric {
        Metric::Euclidean => Ok(euclidean(a, b)),
        Metric::Cosine => {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(AbstractionError::ZeroVector);
            }
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            Ok(1.0 - dot / (na * nb))
        }
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
