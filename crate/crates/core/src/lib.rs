//! Trajectory-level dataset auditing for offline reinforcement learning.
//!
//! Given a target dataset and black-box query access to a suspect policy, the
//! auditor decides for every audited trajectory whether the suspect was trained
//! on it. The decision compares the suspect's *fingerprint* (critic-estimated
//! cumulative rewards of the suspect's actions along the trajectory's recorded
//! states) with the fingerprints of an ensemble of shadow policies trained on
//! the target dataset, using an outlier hypothesis test over distances to the
//! shadow mean.
//!
//! The pipeline has three steps:
//!
//! 1. **Model preparation**: train shadow policies ([`policy::train_shadows`])
//!    and a critic ([`critic::train_critic`]) on the target dataset.
//! 2. **Cumulative reward collection**: query every policy on the dataset's
//!    states and score the resulting pairs with the critic
//!    ([`fingerprint::collect_fingerprint`]).
//! 3. **Audit**: distance of each fingerprint from the shadow mean, then a
//!    Grubbs or 3σ outlier test ([`audit::audit_trajectory`],
//!    [`audit::audit_model`]).
//!
//! This crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command-line surface live in the `trajaudit` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audit;
pub mod critic;
pub mod data;
pub mod env;
mod error;
pub mod fingerprint;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
