//! Reachability-based properness checks.
//!
//! A transition counts as possible iff its probability is strictly positive. Properness
//! is a property of the transition graph, so no tolerance is applied.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::{Policy, SspProblem, StochasticPolicy};

/// Name recorded in [`ProperCheckReport::rho_method`].
pub const RHO_SHORTEST_PATH_PRODUCT: &str = "shortest-path-product";

/// Outcome of [`is_proper`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperCheckReport {
    pub proper: bool,
    /// States from which the terminal cannot be reached under the policy.
    pub unreachable_states: Vec<usize>,
    /// Smallest horizon within which every state terminates with positive probability.
    pub m_stages: Option<usize>,
    /// Lower bound on the probability of terminating within `m_stages` stages, from any state.
    pub rho_m: Option<f64>,
    pub rho_method: String,
}

/// Outcome of [`all_policies_proper`]. When some policy is improper, `witness_states` is
/// a nonempty set of states that can avoid the terminal forever by playing
/// `witness_actions` (aligned with `witness_states`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllProperReport {
    pub all_proper: bool,
    pub witness_states: Vec<usize>,
    pub witness_actions: Vec<usize>,
}

/// Weight `1/|U|` on every action in every state.
pub fn uniform_random_policy(problem: &SspProblem) -> StochasticPolicy {
    StochasticPolicy::uniform(problem.num_states(), problem.num_actions())
}

/// One-step transition probabilities `i -> j` under the policy, nonterminal rows only.
pub(crate) fn policy_transition_matrix<P: Policy + ?Sized>(problem: &SspProblem, policy: &P) -> Vec<Vec<f64>> {
    let n = problem.num_states();
    let mut out = vec![vec![0.0; n]; n];
    for i in problem.nonterminal_states() {
        for (u, w) in policy.support(i) {
            for (j, p, _) in problem.successors(i, u) {
                out[i][j] += w * p;
            }
        }
    }
    out
}

/// Decides whether the terminal is reachable from every state under `policy`.
pub fn is_proper<P: Policy + ?Sized>(problem: &SspProblem, policy: &P) -> ProperCheckReport {
    let n = problem.num_states();
    let t = problem.terminal();
    let step = policy_transition_matrix(problem, policy);

    let mut dist = vec![usize::MAX; n];
    let mut best = vec![0.0f64; n];
    dist[t] = 0;
    best[t] = 1.0;
    let mut queue = VecDeque::from([t]);
    while let Some(j) = queue.pop_front() {
        for i in problem.nonterminal_states() {
            if dist[i] == usize::MAX && step[i][j] > 0.0 {
                dist[i] = dist[j] + 1;
                queue.push_back(i);
            }
        }
    }
    // Best single-path probability along shortest paths, layer by layer.
    let mut order: Vec<usize> = problem.nonterminal_states().filter(|&i| dist[i] != usize::MAX).collect();
    order.sort_by_key(|&i| dist[i]);
    for &i in &order {
        best[i] = (0..n)
            .filter(|&j| dist[j] != usize::MAX && dist[j] + 1 == dist[i])
            .map(|j| step[i][j] * best[j])
            .fold(0.0, f64::max);
    }

    let unreachable_states: Vec<usize> = (0..n).filter(|&i| dist[i] == usize::MAX).collect();
    let proper = unreachable_states.is_empty();
    let (m_stages, rho_m) = if proper {
        let m = order.iter().map(|&i| dist[i]).max().unwrap_or(0).max(1);
        let rho = order.iter().map(|&i| best[i]).fold(1.0, f64::min);
        (Some(m), Some(rho))
    } else {
        (None, None)
    };
    ProperCheckReport {
        proper,
        unreachable_states,
        m_stages,
        rho_m,
        rho_method: RHO_SHORTEST_PATH_PRODUCT.to_string(),
    }
}

/// Decides whether every stationary policy is proper by peeling states off the
/// nonterminal set until the remainder is closed under some action choice.
pub fn all_policies_proper(problem: &SspProblem) -> AllProperReport {
    let n = problem.num_states();
    let mut inside: Vec<bool> = (0..n).map(|i| i != problem.terminal()).collect();
    let stays_inside = |inside: &[bool], i: usize, u: usize| problem.successors(i, u).all(|(j, _, _)| inside[j]);
    loop {
        let drop: Vec<usize> = (0..n)
            .filter(|&i| inside[i] && !(0..problem.num_actions()).any(|u| stays_inside(&inside, i, u)))
            .collect();
        if drop.is_empty() {
            break;
        }
        for i in drop {
            inside[i] = false;
        }
    }
    let witness_states: Vec<usize> = (0..n).filter(|&i| inside[i]).collect();
    let witness_actions = witness_states
        .iter()
        .map(|&i| (0..problem.num_actions()).find(|&u| stays_inside(&inside, i, u)).expect("closed set"))
        .collect();
    AllProperReport { all_proper: witness_states.is_empty(), witness_states, witness_actions }
}
