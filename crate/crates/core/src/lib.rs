//! Exact inference for causal decision models.
//!
//! The crate covers four model classes and the queries they support:
//!
//! - [`cbn`] — causal Bayesian networks with truncation (do-operator)
//!   semantics, evaluated by exhaustive enumeration over exact rationals.
//! - [`scm`] — structural causal models with deterministic local functions,
//!   abduction, and the three-step counterfactual procedure.
//! - [`dynamic`] — two-slice dynamic decision networks, belief updates,
//!   marginal policies, unrolling, and trajectory simulation.
//! - [`eval`] — Bellman policy evaluation over epistemic states in
//!   conditional, interventional, what-if, and hindsight modes.
//!
//! All probability arithmetic is exact rational; there is no floating-point
//! mode. Models are immutable after construction and queries are pure, so
//! shared models can be queried concurrently.

pub mod cbn;
pub mod dsl;
pub mod dynamic;
pub mod eval;
pub mod fixtures;
pub mod graph;
pub mod scm;
pub mod values;

mod linalg;

pub use values::{Assignment, Distribution, Prob, Rational};

use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code classes.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("variable {0} bound to conflicting values")]
    Conflict(String),
    #[error("all weights are zero; cannot normalize")]
    ZeroMass,
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("assignment does not bind every variable (missing {0})")]
    IncompleteAssignment(String),
    #[error("evidence has probability zero")]
    ZeroEvidence,
    #[error("backdoor criterion violated for adjustment set {{{}}}", .0.join(", "))]
    CriterionViolated(Vec<String>),
    #[error("enumeration size {0} exceeds guard {1} (set CRL_ENUM_GUARD to raise)")]
    TooLarge(u128, u128),
    #[error("value {value} outside the domain of {variable}")]
    DomainViolation { variable: String, value: String },
    #[error("value system unsolvable: {0}")]
    Unsolvable(String),
    #[error("epistemic closure exceeds {0} states")]
    ClosureTooLarge(usize),
    #[error("{0}")]
    Model(String),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("query level not supported by this model: {0}")]
    Unsupported(String),
    #[error("policy not executable: {0}")]
    NotExecutable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Maximum number of assignments any enumeration may visit.
///
/// Defaults to 2^20; overridable through the `CRL_ENUM_GUARD` environment
/// variable.
pub fn enum_guard() -> u128 {
    std::env::var("CRL_ENUM_GUARD")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1u128 << 20)
}

pub(crate) fn check_guard(size: u128) -> Result<()> {
    let guard = enum_guard();
    if size > guard {
        Err(Error::TooLarge(size, guard))
    } else {
        Ok(())
    }
}
