use thiserror::Error;

use crate::dp::Solution;

/// Everything that can go wrong while building, solving or bounding an SSP instance.
#[derive(Debug, Error)]
pub enum SspError {
    #[error("row ({state}, {action}) sums to {sum}, expected 1")]
    RowSumViolation { state: usize, action: usize, sum: f64 },

    #[error("probability p[{state}][{action}][{next}] = {prob} is not in [0, 1]")]
    InvalidProbability { state: usize, action: usize, next: usize, prob: f64 },

    #[error("terminal state is not absorbing under action {action}")]
    TerminalNotAbsorbing { action: usize },

    #[error("terminal self-transition under action {action} has nonzero cost")]
    TerminalCostNonzero { action: usize },

    #[error("cost g({state}, {action}, {next}) is not finite")]
    NonfiniteCost { state: usize, action: usize, next: usize },

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange { what: &'static str, index: usize, limit: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("discount factor {0} is not in (0, 1)")]
    InvalidDiscount(f64),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid value function: {0}")]
    InvalidValueFunction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value iteration stopped after {} iterations without reaching the tolerance", .0.trace.len().saturating_sub(1))]
    MaxItersExceeded(Box<Solution>),

    #[error("policy is improper: terminal unreachable from states {states:?}")]
    ImproperPolicy { states: Vec<usize> },

    #[error("linear system for policy evaluation is singular")]
    SingularSystem,

    #[error("value function is not uniformly improvable: TJ({state}) exceeds J({state}) by {excess}")]
    NotUniformlyImprovable { state: usize, excess: f64 },

    #[error("nonpositive costs on non-terminal transitions {transitions:?}")]
    NonpositiveCost { transitions: Vec<(usize, usize, usize)> },

    #[error("not all policies are proper: states {states:?} can avoid the terminal forever")]
    NotAllPoliciesProper { states: Vec<usize>, actions: Vec<usize> },

    #[error("steps bound for state {state} is infinite and its residual coefficient is nonzero")]
    InfiniteStepsBound { state: usize },

    #[error("horizon search exceeded {stages} stages without certifying termination")]
    HorizonCapExceeded { stages: usize },

    #[error("no transition enters the terminal state with positive probability")]
    NoTerminalTransition,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SspError>;
