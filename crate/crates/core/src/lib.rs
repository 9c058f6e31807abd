//! Dispatch of controllable electric-load ensembles through a KL-control
//! Markov decision process, with the default transition probabilities
//! protected by the Dirichlet differential-privacy mechanism.
//!
//! The crate estimates a Markov model of an ensemble from consumption data,
//! solves the finite-horizon control problem in closed form, privatizes the
//! default dynamics either analytically (Taylor or digamma expected-log
//! weights) or by averaging solves over mechanism samples, and reports the
//! (ε,δ) guarantee together with the optimality cost the privacy buys.

pub mod average;
pub mod config;
pub mod dr;
pub mod ensemble;
pub mod error;
pub mod lsmdp;
pub mod pipeline;
pub mod privacy;
pub mod private_policy;
pub mod report;
pub mod seed;
pub mod special;

#[cfg(test)]
pub mod testutil;

pub use error::{Error, Result};
