//! Bellman operators, value iteration, exact policy evaluation and policy iteration.
//!
//! Every backup sums over successors in increasing state index, skipping zero-probability
//! entries, so results do not depend on how the work is split.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SspError};
use crate::linalg::{self, Matrix};
use crate::model::{ActionChoice, DeterministicPolicy, Policy, SspProblem, ValueFunction};
use crate::properness::{is_proper, policy_transition_matrix};

/// Slack allowed when testing `TJ <= J`.
pub const IMPROVABILITY_TOL: f64 = 1e-9;
/// Required fixed-point accuracy of [`evaluate_policy`].
pub const EVALUATION_TOL: f64 = 1e-10;
/// Policy iteration also stops once successive value functions agree this closely.
pub const PI_VALUE_TOL: f64 = 1e-12;

/// One-step lookahead `sum_j p_ij(u) (g(i,u,j) + J(j))`.
#[inline]
pub fn q_value(problem: &SspProblem, state: usize, action: usize, values: &[f64]) -> f64 {
    let (p, g) = problem.row(state, action);
    let mut acc = 0.0;
    for j in 0..p.len() {
        if p[j] > 0.0 {
            acc += p[j] * (g[j] + values[j]);
        }
    }
    acc
}

/// Min over actions with the lowest index winning ties.
#[inline]
fn best_action(problem: &SspProblem, state: usize, values: &[f64]) -> (usize, f64) {
    let mut best = (0, q_value(problem, state, 0, values));
    for u in 1..problem.num_actions() {
        let q = q_value(problem, state, u, values);
        if q < best.1 {
            best = (u, q);
        }
    }
    best
}

/// Computes `TJ` and a greedy policy in one pass. The terminal entry stays 0.
pub(crate) fn backup_and_greedy(problem: &SspProblem, values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = problem.num_states();
    let mut out = vec![0.0; n];
    let mut actions = vec![0; n];
    for i in problem.nonterminal_states() {
        let (u, q) = best_action(problem, i, values);
        out[i] = q;
        actions[i] = u;
    }
    (out, actions)
}

fn policy_value_at<P: Policy + ?Sized>(problem: &SspProblem, policy: &P, state: usize, values: &[f64]) -> f64 {
    match policy.choice(state) {
        ActionChoice::Single(u) => q_value(problem, state, u, values),
        ActionChoice::Mixed(w) => w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(u, &x)| x * q_value(problem, state, u, values))
            .sum(),
    }
}

fn apply_policy<P: Policy + ?Sized>(problem: &SspProblem, policy: &P, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; problem.num_states()];
    for i in problem.nonterminal_states() {
        out[i] = policy_value_at(problem, policy, i, values);
    }
    out
}

/// The dynamic programming operator `T`.
pub fn bellman_backup(problem: &SspProblem, values: &ValueFunction) -> Result<ValueFunction> {
    values.check(problem)?;
    Ok(ValueFunction::new(backup_and_greedy(problem, values).0))
}

/// The policy evaluation operator `T_mu` for a deterministic policy.
pub fn policy_backup(
    problem: &SspProblem,
    policy: &DeterministicPolicy,
    values: &ValueFunction,
) -> Result<ValueFunction> {
    any_policy_backup(problem, policy, values)
}

/// `T_mu` averaged over a randomized policy's action weights.
pub fn stochastic_policy_backup(
    problem: &SspProblem,
    policy: &crate::model::StochasticPolicy,
    values: &ValueFunction,
) -> Result<ValueFunction> {
    any_policy_backup(problem, policy, values)
}

/// `T_mu` for any stationary policy.
pub fn any_policy_backup<P: Policy + ?Sized>(
    problem: &SspProblem,
    policy: &P,
    values: &ValueFunction,
) -> Result<ValueFunction> {
    values.check(problem)?;
    policy.check(problem)?;
    Ok(ValueFunction::new(apply_policy(problem, policy, values)))
}

/// Greedy policy with respect to `values`; ties go to the lowest action index.
pub fn greedy_policy(problem: &SspProblem, values: &ValueFunction) -> Result<DeterministicPolicy> {
    values.check(problem)?;
    let actions = backup_and_greedy(problem, values).1;
    DeterministicPolicy::new(actions, problem.num_actions())
}

/// Signed extremes of `TJ - J` over all states (terminal included) and the max-norm
/// Bellman residual. Because the terminal contributes a zero difference,
/// `c_under <= 0 <= c_bar` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub residual: f64,
    pub c_under: f64,
    pub c_bar: f64,
}

impl Residual {
    fn between(backed_up: &[f64], values: &[f64]) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (tj, j) in backed_up.iter().zip(values) {
            let d = tj - j;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Self { residual: (-lo).max(hi), c_under: lo, c_bar: hi }
    }
}

pub fn bellman_residual(problem: &SspProblem, values: &ValueFunction) -> Result<Residual> {
    let tj = bellman_backup(problem, values)?;
    Ok(Residual::between(&tj, values))
}

/// Whether `TJ <= J + 1e-9` in every state.
pub fn is_uniformly_improvable(problem: &SspProblem, values: &ValueFunction) -> Result<bool> {
    match check_uniformly_improvable(problem, values) {
        Ok(()) => Ok(true),
        Err(SspError::NotUniformlyImprovable { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Like [`is_uniformly_improvable`] but reports the worst offending state.
pub fn check_uniformly_improvable(problem: &SspProblem, values: &ValueFunction) -> Result<()> {
    let tj = bellman_backup(problem, values)?;
    let (state, excess) = tj
        .iter()
        .zip(values.iter())
        .map(|(a, b)| a - b)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best });
    if excess > IMPROVABILITY_TOL {
        return Err(SspError::NotUniformlyImprovable { state, excess });
    }
    Ok(())
}

/// Solver selector used by benchmarks and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Algorithm {
    #[default]
    #[serde(rename = "vi")]
    ValueIteration,
    #[serde(rename = "pi")]
    PolicyIteration,
}

impl std::str::FromStr for Algorithm {
    type Err = SspError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vi" => Ok(Algorithm::ValueIteration),
            "pi" => Ok(Algorithm::PolicyIteration),
            other => Err(SspError::InvalidArgument(format!("unknown algorithm {other:?}, expected vi or pi"))),
        }
    }
}

/// One row of an [`IterationTrace`]: the value function after `iter` steps and the
/// residual of that value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub values: ValueFunction,
    pub residual: f64,
    pub c_under: f64,
    pub c_bar: f64,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    fn push(&mut self, values: ValueFunction, r: Residual, started: Instant) {
        self.records.push(IterationRecord {
            iter: self.records.len(),
            values,
            residual: r.residual,
            c_under: r.c_under,
            c_bar: r.c_bar,
            elapsed_secs: started.elapsed().as_secs_f64(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Final value function and the trace that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub value: ValueFunction,
    pub trace: IterationTrace,
}

/// Applies `T` until the residual drops below `epsilon`.
///
/// Record `k` of the trace holds `T^k J0` and its own residual. When `max_iters` backups
/// have been applied without converging the partial solution is returned inside
/// [`SspError::MaxItersExceeded`]; bounds computed from it are still valid.
pub fn value_iteration(
    problem: &SspProblem,
    initial: &ValueFunction,
    epsilon: f64,
    max_iters: usize,
) -> Result<Solution> {
    if !(epsilon > 0.0) {
        return Err(SspError::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    initial.check(problem)?;
    let started = Instant::now();
    let mut trace = IterationTrace::default();
    let mut current = initial.clone();
    loop {
        let (next, _) = backup_and_greedy(problem, &current);
        let r = Residual::between(&next, &current);
        trace.push(current.clone(), r, started);
        if r.residual < epsilon {
            return Ok(Solution { value: current, trace });
        }
        if trace.len() > max_iters {
            return Err(SspError::MaxItersExceeded(Box::new(Solution { value: current, trace })));
        }
        current = ValueFunction::new(next);
    }
}

/// Exact value of a proper policy from the linear system `(I - P_mu) J = g_mu` over the
/// nonterminal states.
pub fn evaluate_policy<P: Policy + ?Sized>(problem: &SspProblem, policy: &P) -> Result<ValueFunction> {
    policy.check(problem)?;
    let report = is_proper(problem, policy);
    if !report.proper {
        return Err(SspError::ImproperPolicy { states: report.unreachable_states });
    }
    let states: Vec<usize> = problem.nonterminal_states().collect();
    let step = policy_transition_matrix(problem, policy);
    let zero = vec![0.0; problem.num_states()];
    let mut a = Matrix::identity(states.len());
    let mut b = vec![0.0; states.len()];
    for (r, &i) in states.iter().enumerate() {
        b[r] = policy_value_at(problem, policy, i, &zero);
        for (c, &j) in states.iter().enumerate() {
            a[(r, c)] -= step[i][j];
        }
    }
    let x = linalg::solve(&a, &b, EVALUATION_TOL * 1e-2).ok_or(SspError::SingularSystem)?;
    let mut values = vec![0.0; problem.num_states()];
    for (r, &i) in states.iter().enumerate() {
        values[i] = x[r];
    }
    let values = ValueFunction::new(values);
    let fixed = apply_policy(problem, policy, &values);
    let err = fixed.iter().zip(values.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if err > EVALUATION_TOL {
        log::warn!("policy evaluation fixed-point error {err:e} exceeds {EVALUATION_TOL:e}");
    }
    Ok(values)
}

/// Result of [`policy_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterationResult {
    pub policy: DeterministicPolicy,
    pub value: ValueFunction,
    pub trace: IterationTrace,
    /// Number of improvement steps taken, including the final one that left the policy
    /// unchanged.
    pub improvements: usize,
    pub converged: bool,
}

/// Policy iteration from `initial`, which must be proper.
///
/// Record 0 is the evaluation of `initial`; record `k` the evaluation of the `k`-th
/// improved policy. When an improvement step returns the policy it started from, a final
/// record repeating the value function is appended and the loop stops. The loop also
/// stops once two successive value functions differ by less than 1e-12.
pub fn policy_iteration<P: Policy + ?Sized>(
    problem: &SspProblem,
    initial: &P,
    max_iters: usize,
) -> Result<PolicyIterationResult> {
    let started = Instant::now();
    let mut trace = IterationTrace::default();
    let mut value = evaluate_policy(problem, initial)?;
    let mut previous: Option<DeterministicPolicy> = match initial.choice_table() {
        Some(actions) => Some(DeterministicPolicy::new(actions, problem.num_actions())?),
        None => None,
    };
    let (mut backed_up, mut greedy) = backup_and_greedy(problem, &value);
    trace.push(value.clone(), Residual::between(&backed_up, &value), started);

    let mut improvements = 0;
    let mut converged = false;
    while improvements < max_iters {
        improvements += 1;
        let policy = DeterministicPolicy::new(greedy.clone(), problem.num_actions())?;
        if previous.as_ref() == Some(&policy) {
            trace.push(value.clone(), Residual::between(&backed_up, &value), started);
            previous = Some(policy);
            converged = true;
            break;
        }
        let next = evaluate_policy(problem, &policy)?;
        let change = next.max_abs_diff(&value);
        value = next;
        (backed_up, greedy) = backup_and_greedy(problem, &value);
        trace.push(value.clone(), Residual::between(&backed_up, &value), started);
        previous = Some(policy);
        if change < PI_VALUE_TOL {
            converged = true;
            break;
        }
    }
    let policy = match previous {
        Some(p) => p,
        None => DeterministicPolicy::new(greedy, problem.num_actions())?,
    };
    Ok(PolicyIterationResult { policy, value, trace, improvements, converged })
}

/// Helper for [`policy_iteration`]: deterministic policies expose their action table so
/// that a repeated policy can be detected on the first improvement.
trait ChoiceTable {
    fn choice_table(&self) -> Option<Vec<usize>>;
}

impl<P: Policy + ?Sized> ChoiceTable for P {
    fn choice_table(&self) -> Option<Vec<usize>> {
        (0..self.num_states())
            .map(|i| match self.choice(i) {
                ActionChoice::Single(u) => Some(u),
                ActionChoice::Mixed(_) => None,
            })
            .collect()
    }
}
