//! Simulation and verification harness for a band-in-a-tube realization of
//! the nonlocal PR box.
//!
//! The crate has three layers:
//!
//! * the physical model — a seeded trial engine ([`rubberband`]) and the same
//!   protocol executed as three isolated state machines exchanging audited
//!   messages ([`agents`]);
//! * reference boxes — the ideal PR sampler and the sixteen deterministic
//!   local strategies ([`boxes`]);
//! * statistics — conditional outcome tables, correlators, the CHSH value,
//!   marginals, signaling metrics, and a KS uniformity statistic ([`stats`]),
//!   all generic over a [`Scalar`] so analytic tables can use exact rationals
//!   while empirical tables use floats.
//!
//! [`runner`] ties the layers together into reproducible batches and
//! machine-readable reports; the `bandbox` binary is a thin wrapper over it.

pub mod agents;
pub mod bits;
pub mod boxes;
pub mod report;
pub mod rng;
pub mod rubberband;
pub mod runner;
pub mod scalar;
pub mod stats;

pub use bits::{nlb_constraint, Bit, Color, InputPair, OutputPair, Party};
pub use report::Report;
pub use runner::{run, run_sharded, RunConfig, Scenario};
pub use scalar::{Exact, Scalar};

/// Conditional outcome table with exact rational entries (analytic boxes).
pub type ExactBehavior = stats::Behavior<Exact>;

/// Conditional outcome table with floating-point entries (empirical
/// estimates and mixtures).
pub type EmpiricalBehavior = stats::Behavior<f64>;
