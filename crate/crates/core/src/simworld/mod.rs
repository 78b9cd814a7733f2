//! Deterministic discrete-tick world, scenarios, episode runner and trace
//! analysis.

pub mod episode;
pub mod scenario;
pub mod trace;
pub mod world;

use thiserror::Error;

use crate::types::EngineError;

pub use episode::{run_episode, Episode};
pub use scenario::{
    parse_scenario, serialize_scenario, Durations, FailureInjection, Perturbation,
    PerturbationEvent, Scenario,
};
pub use trace::{
    detect_chattering, traces_equivalent, EventKind, Lifecycle, Outcome, Trace, TraceEvent,
    DEFAULT_CHATTER_K,
};
pub use world::{SimWorld, WorldState, TRANSIT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
