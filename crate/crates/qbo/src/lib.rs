//! Quantum-query-budget Bayesian optimization for fuselage shape control.
//!
//! A staged weighted-GP UCB optimizer whose mean estimations are priced
//! either by an emulated quantum Monte Carlo estimator or by
//! Chebyshev-sized classical Monte Carlo, run against a simulated linear
//! shape-control environment. The harness reproduces regret and
//! sample-efficiency comparisons between the two methods at desk scale.

pub mod config;
pub mod env;
pub mod error;
pub mod estimators;
pub mod gp;
pub mod harness;
pub mod optimizer;
pub mod plot;
pub mod rff;

pub use error::{QboError, Result};
