//! Risk-sensitive tabular Q-learning with exponential utilities.
//!
//! The crate works with finite MDPs under the entropic risk criterion and
//! provides the Bellman-type operators in both parametrizations (utility scale
//! `x` and certainty-equivalent scale `Q`), exact solvers used as oracles,
//! trajectory samplers, the two-timescale and one-timescale stochastic
//! approximation learners, and an experiment harness.

pub mod error;
pub mod fixtures;
pub mod harness;
pub mod learners;
pub mod mdp;
pub mod operators;
pub mod rng;
pub mod sim;
pub mod solvers;
pub mod vectors;

pub use error::{Error, Result};
pub use mdp::{DerivedConstants, TabularMdp, ValidationReport, Violation};
pub use vectors::{linf_distance, sup_log_distance, QVector, StationaryPolicy, UtilityVector};
