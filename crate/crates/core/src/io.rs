//! JSON instance files.
//!
//! ```json
//! {
//!   "num_states": 2, "num_actions": 2, "terminal": 0, "convention": "cost",
//!   "transitions": [
//!     {"from": 0, "action": 0, "to": 0, "prob": 1.0, "cost": 0.0},
//!     {"from": 1, "action": 0, "to": 0, "prob": 1.0, "cost": 2.0}
//!   ]
//! }
//! ```
//!
//! Omitted `(from, action, to)` triples have probability 0. Under the `"reward"`
//! convention the `cost` field holds a reward and is negated on load.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SspError};
use crate::model::{SspProblem, ValueFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Cost,
    Reward,
}

impl Convention {
    /// Converts a cost-form value function into this convention (and back; the map is
    /// its own inverse).
    pub fn present(self, values: &ValueFunction) -> ValueFunction {
        match self {
            Convention::Cost => values.clone(),
            Convention::Reward => values.negated(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRecord {
    pub from: usize,
    pub action: usize,
    pub to: usize,
    pub prob: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub terminal: usize,
    pub convention: Convention,
    pub transitions: Vec<TransitionRecord>,
}

impl ProblemFile {
    /// Builds and validates the cost-form instance, together with the file's convention.
    pub fn into_problem(self) -> Result<(SspProblem, Convention)> {
        let mut seen = HashSet::new();
        let mut b = SspProblem::builder(self.num_states, self.num_actions, self.terminal);
        for t in &self.transitions {
            if !seen.insert((t.from, t.action, t.to)) {
                return Err(SspError::InvalidArgument(format!(
                    "duplicate transition ({}, {}, {})",
                    t.from, t.action, t.to
                )));
            }
            b = b.transition(t.from, t.action, t.to, t.prob, t.cost);
        }
        let raw = b.build_unchecked()?;
        let problem = match self.convention {
            Convention::Cost => raw,
            Convention::Reward => raw.negate_costs(),
        };
        problem.validate()?;
        Ok((problem, self.convention))
    }

    /// File describing a cost-form `problem` in the given convention. Only
    /// positive-probability transitions are listed, in index order.
    pub fn from_problem(problem: &SspProblem, convention: Convention) -> Self {
        let shown = match convention {
            Convention::Cost => problem.clone(),
            Convention::Reward => problem.negate_costs(),
        };
        let mut transitions = Vec::new();
        for i in 0..shown.num_states() {
            for u in 0..shown.num_actions() {
                for (j, p, g) in shown.successors(i, u) {
                    transitions.push(TransitionRecord { from: i, action: u, to: j, prob: p, cost: g });
                }
            }
        }
        Self {
            num_states: shown.num_states(),
            num_actions: shown.num_actions(),
            terminal: shown.terminal(),
            convention,
            transitions,
        }
    }
}

pub fn parse_problem(json: &str) -> Result<(SspProblem, Convention)> {
    serde_json::from_str::<ProblemFile>(json)?.into_problem()
}

pub fn load_problem(path: &Path) -> Result<(SspProblem, Convention)> {
    parse_problem(&std::fs::read_to_string(path)?)
}

pub fn problem_to_json(problem: &SspProblem, convention: Convention) -> String {
    let mut s = serde_json::to_string_pretty(&ProblemFile::from_problem(problem, convention))
        .expect("problem files always serialize");
    s.push('\n');
    s
}

/// Value-function file: `{"convention": "reward", "values": [...]}`. The convention
/// defaults to the instance's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    pub values: Vec<f64>,
}

impl ValueFile {
    /// Cost-form value function, checked against `problem`.
    pub fn into_values(self, problem: &SspProblem, default: Convention) -> Result<ValueFunction> {
        let v = self.convention.unwrap_or(default).present(&ValueFunction::new(self.values));
        v.check(problem)?;
        Ok(v)
    }
}

pub fn load_values(path: &Path, problem: &SspProblem, default: Convention) -> Result<ValueFunction> {
    serde_json::from_str::<ValueFile>(&std::fs::read_to_string(path)?)?.into_values(problem, default)
}
