//! Monte-Carlo search for job orderings that get the most out of a
//! black-box job-shop dispatcher.
//!
//! A [`Plan`] (an ordering of jobs) goes into a dispatcher ([`Oracle`]),
//! which turns it into a [`Schedule`]. The searches in [`search`] only ever
//! observe the dispatcher through an [`metrics::Evaluator`], so any
//! scheduler, including a learned [`surrogate`], can be plugged in.

pub mod abstraction;
pub mod instances;
pub mod metrics;
pub mod model;
pub mod resources;
pub mod schedulers;
pub mod search;
pub mod surrogate;

pub use model::{
    validate_schedule, Feasibility, Interval, Job, JobId, JobSet, Machine, MachineId, ModelError,
    Oracle, Plan, Schedule, Stage, Time, Timings, Violation,
};
