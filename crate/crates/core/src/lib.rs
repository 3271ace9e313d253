//! Exact finite-support laboratory for fairness-constrained risk minimization
//! under malicious noise.
//!
//! Everything here is a pure computation over weighted atoms `(point, label,
//! group)`. Randomized classifiers are never sampled on the evaluation path;
//! their statistics are computed in closed form from acceptance
//! probabilities, so bounds can be checked at `1e-9`.
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration files and
//! the command line live in the `fnl` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adversaries;
pub mod calibration;
pub mod classifiers;
pub mod dist;
mod error;
pub mod harness;
pub mod num;
pub mod repair;

pub use adversaries::{AttackKind, AttackOutcome, AttackSpec, CorruptionDecomposition, Direction};
pub use calibration::{BinnedPredictor, CalibrationReport};
pub use classifiers::{
    BaseClassifier, GroupRates, GroupStats, HypothesisClass, Notion, PQClassifier, PQParams,
};
pub use dist::{Atom, Distribution, GroupId, GroupMassProfile, Label, PointId};
pub use error::{Error, Result};
pub use repair::{CandidateLabel, RepairWitness};

/// Tolerance used wherever a post-condition says "exactly".
pub const EXACT_TOL: f64 = 1e-9;

/// Largest deviation of an input mass total from one that is silently
/// renormalized.
pub const INPUT_MASS_TOL: f64 = 1e-6;
