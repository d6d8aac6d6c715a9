//! Cost-aware Bayesian optimization with adaptive stopping.
//!
//! The crate couples a Gaussian-process model ([`gp`]) with cost-aware
//! acquisition functions ([`acquisition`]), a family of stopping rules
//! ([`stopping`]), evaluation-cost models ([`costs`]), problem instances
//! ([`problems`]) and a seeded benchmark harness ([`harness`]) that runs
//! acquisition x stopping-rule grids and aggregates cost-adjusted regret.
//!
//! Everything is deterministic given a seed: trials are pure functions of
//! `(problem, config, seed)` and can be run in parallel.

pub mod acquisition;
pub mod costs;
pub mod error;
pub mod gp;
pub mod harness;
pub mod mathx;
pub mod problems;
pub mod stopping;

pub use error::{CaboError, Result};

/// A point in the (scaled) search domain `[0,1]^d`.
pub type Point = Vec<f64>;
