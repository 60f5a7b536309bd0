//! Knowledge-map guided code review.
//!
//! A symbolic [`analyzer`] runs detector-backed rules from the
//! [`knowledge_map`] over Python snippets; [`promptkit`] assembles prompts for
//! the four experimental scenarios; [`backend`] reaches a classifier over HTTP
//! or a deterministic mock; [`evalharness`] scores runs and reproduces the
//! comparison-table arithmetic.

pub mod analyzer;
pub mod backend;
pub mod corpus;
pub mod evalharness;
pub mod knowledge_map;
pub mod promptkit;

pub use num_rational::Rational64;

/// Metrics in floating point, as stored in run records.
pub type Metrics = evalharness::EvalMetrics<f64>;
/// Metrics in exact rational arithmetic.
pub type ExactMetrics = evalharness::EvalMetrics<Rational64>;
