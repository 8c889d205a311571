//! Stochastic shortest path (SSP) solvers with certified suboptimality bounds.
//!
//! The crate solves finite SSP problems by value iteration and policy iteration, and
//! turns the Bellman residual `||TJ - J||` of any uniformly improvable value function
//! (`TJ <= J`) into per-state and global bounds on `|J*(i) - J(i)|`.
//!
//! Modules:
//! * [`model`]: instances, value functions, policies, discounted reduction.
//! * [`dp`]: Bellman operators, value/policy iteration, exact evaluation.
//! * [`properness`]: proper-policy and all-policies-proper checks.
//! * [`bounds`]: steps bounds and the suboptimality bounds built on them.
//! * [`simulate`]: seeded Monte-Carlo estimates of steps to termination.
//! * [`gridworld`]: the 4x3 gridworld benchmark and its reference tables.
//! * [`tables`]: per-iteration summaries of solver traces.
//! * [`io`]: JSON instance files.

pub mod bounds;
pub mod dp;
pub mod error;
pub mod gridworld;
pub mod instances;
pub mod io;
mod linalg;
pub mod model;
pub mod properness;
pub mod simulate;
pub mod tables;

pub use error::{Result, SspError};
pub use model::{DeterministicPolicy, DiscountedMdp, Policy, SspProblem, StochasticPolicy, ValueFunction};
