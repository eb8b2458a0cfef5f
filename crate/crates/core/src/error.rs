//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was invoked on a state of the wrong phase.
    #[error("phase violation: expected a {expected} state, got a {actual} state")]
    PhaseViolation {
        expected: crate::model::Phase,
        actual: crate::model::Phase,
    },

    /// An event was applied at a state where it is not admissible.
    #[error("event {event} is not admissible at state {state}")]
    Inadmissible { event: String, state: String },

    /// A computer index outside 1..=K.
    #[error("computer index {index} out of range 1..={k}")]
    InvalidComputer { index: usize, k: usize },

    /// Model or solver parameters violating a documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Observer states must hold at least one candidate.
    #[error("observer state must be nonempty")]
    EmptyObserverState,

    /// An observation that no candidate of the observer state can produce.
    #[error("inconsistent observation: {0}")]
    InconsistentObservation(String),

    /// A candidate passed where membership in the observer state is required.
    #[error("state {candidate} is not a candidate of the observer state")]
    CandidateNotInState { candidate: String },

    /// Construction would exceed the configured state budget.
    #[error("state budget exceeded: construction needs at least {needed} states, budget is {budget}")]
    CapacityExceeded { needed: usize, budget: usize },

    /// Value iteration hit the iteration cap before reaching tolerance.
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
