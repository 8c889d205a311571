//! Suboptimality bounds derived from the Bellman residual.
//!
//! Each bound has the form `residual * N(i)`, where `N(i)` bounds the expected number of
//! transitions until termination from state `i`. Three procedures produce `N`:
//!
//! * [`steps_bound_positive_costs`]: `(J(i) - a) / b + 1` when every non-terminal
//!   transition has positive cost (`a` is the cheapest move into the terminal, `b` the
//!   cheapest other move). Valid for every policy no costlier than `J`.
//! * [`steps_bound_all_proper`]: the optimal expected step count of a companion problem
//!   that pays -1 per non-terminal move. Needs every policy to be proper.
//! * [`horizon_m_general`] + [`loose_general_bound`]: no restriction on costs. A
//!   finite-horizon search finds `m` such that every policy no costlier than `J` stops
//!   within `m` stages with positive probability, and `N = m / rho_m`.
//!
//! Infinite steps bounds are represented by `f64::INFINITY` and mark a bound as vacuous.

use serde::{Deserialize, Serialize};

use crate::dp::{self, check_uniformly_improvable, policy_iteration, q_value, Residual};
use crate::error::{Result, SspError};
use crate::model::{DeterministicPolicy, SspProblem, ValueFunction};
use crate::properness::all_policies_proper;

/// Default stage cap for [`horizon_m_general`].
pub const DEFAULT_HORIZON_CAP: usize = 1_000_000;

/// Procedure that produced a steps bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepsMethod {
    PositiveCost,
    AllProper,
    GeneralLoose,
    /// Every nonterminal state terminates deterministically in one step.
    Override,
}

/// Requested steps-bound procedure; `Auto` picks the tightest one that applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMethod {
    #[default]
    Auto,
    PositiveCost,
    AllProper,
    General,
}

impl BoundsMethod {
    /// `Auto` becomes positive-cost if all non-terminal costs are positive, otherwise
    /// all-proper if every policy is proper, otherwise general.
    pub fn resolve(self, problem: &SspProblem) -> BoundsMethod {
        match self {
            BoundsMethod::Auto if nonpositive_costs(problem).is_empty() => BoundsMethod::PositiveCost,
            BoundsMethod::Auto if all_policies_proper(problem).all_proper => BoundsMethod::AllProper,
            BoundsMethod::Auto => BoundsMethod::General,
            m => m,
        }
    }
}

/// Lower and upper envelopes from the residual extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bounds {
    pub lower: ValueFunction,
    pub upper: ValueFunction,
}

/// `lower(i) = J(i) + c_under * n_star(i)` and `upper(i) = J(i) + c_bar * n_mu(i)`.
///
/// `n_star` must bound expected steps under an optimal policy, `n_mu` under the greedy
/// policy for `J`. Then `lower <= J* <= J_greedy <= upper`.
pub fn theorem1_bounds(
    problem: &SspProblem,
    values: &ValueFunction,
    n_star: &[f64],
    n_mu: &[f64],
) -> Result<Theorem1Bounds> {
    check_steps_len(problem, n_star)?;
    check_steps_len(problem, n_mu)?;
    let r = dp::bellman_residual(problem, values)?;
    let envelope = |c: f64, steps: &[f64]| -> Result<ValueFunction> {
        let mut out = values.as_slice().to_vec();
        for i in problem.nonterminal_states() {
            out[i] += scaled(c, steps[i]).ok_or(SspError::InfiniteStepsBound { state: i })?;
        }
        Ok(ValueFunction::new(out))
    };
    Ok(Theorem1Bounds { lower: envelope(r.c_under, n_star)?, upper: envelope(r.c_bar, n_mu)? })
}

/// `c * n` with `0 * inf = 0`; `None` for a nonzero multiple of infinity.
fn scaled(c: f64, n: f64) -> Option<f64> {
    if c == 0.0 {
        Some(0.0)
    } else if n.is_infinite() {
        None
    } else {
        Some(c * n)
    }
}

fn check_steps_len(problem: &SspProblem, steps: &[f64]) -> Result<()> {
    if steps.len() != problem.num_states() {
        return Err(SspError::DimensionMismatch(format!(
            "{} steps-bound entries for {} states",
            steps.len(),
            problem.num_states()
        )));
    }
    if let Some(i) = steps.iter().position(|n| n.is_nan() || *n < 0.0) {
        return Err(SspError::InvalidArgument(format!("steps bound at state {i} is negative or NaN")));
    }
    Ok(())
}

/// `residual * N(i)` per state, valid for `|J*(i) - J(i)|` and for the greedy policy's
/// error when `J` is uniformly improvable.
pub fn per_state_bound(problem: &SspProblem, values: &ValueFunction, steps: &[f64]) -> Result<Vec<f64>> {
    check_steps_len(problem, steps)?;
    check_uniformly_improvable(problem, values)?;
    let r = dp::bellman_residual(problem, values)?.residual;
    Ok(steps.iter().map(|&n| scaled(r, n).unwrap_or(f64::INFINITY)).collect())
}

/// `residual * max_i N(i)`. Pass `N` with overrides already applied.
pub fn global_bound(problem: &SspProblem, values: &ValueFunction, steps: &[f64]) -> Result<f64> {
    check_steps_len(problem, steps)?;
    check_uniformly_improvable(problem, values)?;
    let r = dp::bellman_residual(problem, values)?.residual;
    let n = problem.nonterminal_states().map(|i| steps[i]).fold(0.0, f64::max);
    Ok(scaled(r, n).unwrap_or(f64::INFINITY))
}

/// Non-terminal transitions (positive probability, successor not terminal) whose cost
/// is not strictly positive.
pub fn nonpositive_costs(problem: &SspProblem) -> Vec<(usize, usize, usize)> {
    let t = problem.terminal();
    let mut out = Vec::new();
    for i in problem.nonterminal_states() {
        for u in 0..problem.num_actions() {
            for (j, _, g) in problem.successors(i, u) {
                if j != t && !(g > 0.0) {
                    out.push((i, u, j));
                }
            }
        }
    }
    out
}

/// Cheapest cost of any positive-probability move into the terminal from a nonterminal
/// state.
pub fn min_terminal_cost(problem: &SspProblem) -> Option<f64> {
    let t = problem.terminal();
    problem
        .nonterminal_states()
        .flat_map(|i| (0..problem.num_actions()).map(move |u| (i, u)))
        .filter(|&(i, u)| problem.prob(i, u, t) > 0.0)
        .map(|(i, u)| problem.cost(i, u, t))
        .reduce(f64::min)
}

/// Cheapest cost of any positive-probability move between nonterminal states;
/// `+inf` when there is none.
pub fn min_step_cost(problem: &SspProblem) -> f64 {
    let t = problem.terminal();
    let mut b = f64::INFINITY;
    for i in problem.nonterminal_states() {
        for u in 0..problem.num_actions() {
            for (j, _, g) in problem.successors(i, u) {
                if j != t {
                    b = b.min(g);
                }
            }
        }
    }
    b
}

/// Nonterminal states from which every action moves to the terminal with probability 1.
/// Their expected step count is exactly 1.
pub fn override_states(problem: &SspProblem) -> Vec<usize> {
    let t = problem.terminal();
    problem
        .nonterminal_states()
        .filter(|&i| (0..problem.num_actions()).all(|u| problem.successors(i, u).all(|(j, _, _)| j == t)))
        .collect()
}

fn positive_cost_steps(problem: &SspProblem, values: &ValueFunction, b: f64) -> Result<Vec<f64>> {
    let a = min_terminal_cost(problem).ok_or(SspError::NoTerminalTransition)?;
    let mut steps = vec![0.0; problem.num_states()];
    for i in problem.nonterminal_states() {
        let raw = (values[i] - a) / b + 1.0;
        if raw < 1.0 {
            log::warn!("steps bound {raw} at state {i} clamped to 1");
            steps[i] = 1.0;
        } else {
            steps[i] = raw;
        }
    }
    Ok(steps)
}

/// `N(i) = (J(i) - a) / b + 1` for positive non-terminal costs. Values below 1 are
/// clamped to 1. The terminal entry is 0. No override is applied.
pub fn steps_bound_positive_costs(problem: &SspProblem, values: &ValueFunction) -> Result<Vec<f64>> {
    let bad = nonpositive_costs(problem);
    if !bad.is_empty() {
        return Err(SspError::NonpositiveCost { transitions: bad });
    }
    check_uniformly_improvable(problem, values)?;
    positive_cost_steps(problem, values, min_step_cost(problem))
}

/// Variant of [`steps_bound_positive_costs`] that replaces `b` by the smallest expected
/// non-terminal cost of an action, conditioned on not terminating:
/// `min_{i,u} sum_{j != t} p g / sum_{j != t} p`.
pub fn steps_bound_positive_costs_expected(problem: &SspProblem, values: &ValueFunction) -> Result<Vec<f64>> {
    let bad = nonpositive_costs(problem);
    if !bad.is_empty() {
        return Err(SspError::NonpositiveCost { transitions: bad });
    }
    check_uniformly_improvable(problem, values)?;
    let t = problem.terminal();
    let mut b = f64::INFINITY;
    for i in problem.nonterminal_states() {
        for u in 0..problem.num_actions() {
            let (mass, weighted) = problem
                .successors(i, u)
                .filter(|&(j, _, _)| j != t)
                .fold((0.0, 0.0), |(m, w), (_, p, g)| (m + p, w + p * g));
            if mass > 0.0 {
                b = b.min(weighted / mass);
            }
        }
    }
    positive_cost_steps(problem, values, b)
}

/// Upper bound on expected steps under any policy, from the companion problem that pays
/// -1 for every move that does not enter the terminal. Requires all policies proper.
pub fn steps_bound_all_proper(problem: &SspProblem) -> Result<Vec<f64>> {
    let report = all_policies_proper(problem);
    if !report.all_proper {
        return Err(SspError::NotAllPoliciesProper {
            states: report.witness_states,
            actions: report.witness_actions,
        });
    }
    let t = problem.terminal();
    let mut b = SspProblem::builder(problem.num_states(), problem.num_actions(), t);
    for i in 0..problem.num_states() {
        for u in 0..problem.num_actions() {
            for (j, p, _) in problem.successors(i, u) {
                let g = if i == t || j == t { 0.0 } else { -1.0 };
                b = b.transition(i, u, j, p, g);
            }
        }
    }
    let companion = b.build()?;
    let start = DeterministicPolicy::constant(problem.num_states(), 0);
    let solved = policy_iteration(&companion, &start, 10_000)?;
    Ok((0..problem.num_states()).map(|i| if i == t { 0.0 } else { 1.0 - solved.value[i] }).collect())
}

/// Stopping rule for the horizon search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonCriterion {
    /// Stop at the first stage `k` with `J_k(i) + a > J(i)` for every state outside `T_k`.
    #[default]
    WithTerminalCost,
    /// Stop at the first stage `k` with `J_k(i) > J(i)` for every state outside `T_k`.
    StageValueOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HorizonOptions {
    pub criterion: HorizonCriterion,
    pub max_stages: usize,
}

impl Default for HorizonOptions {
    fn default() -> Self {
        Self { criterion: HorizonCriterion::default(), max_stages: DEFAULT_HORIZON_CAP }
    }
}

/// Output of [`horizon_m_general`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonCertificate {
    /// Every policy no costlier than `J` terminates within `m` stages with positive
    /// probability from every state.
    pub m: usize,
    /// `terminal_sets[k]`: states from which termination within `k` stages is
    /// unavoidable under every policy.
    pub terminal_sets: Vec<Vec<usize>>,
    /// `stage_values[k][i]`: least `k`-stage cost of avoiding termination from `i`,
    /// `None` for states in `terminal_sets[k]`.
    pub stage_values: Vec<Vec<Option<f64>>>,
    pub a_min: f64,
    pub criterion: HorizonCriterion,
}

/// Finite-horizon search for the stage `m` by which every policy with `J_mu <= J`
/// terminates with positive probability.
///
/// Stage `k` keeps, for each state not yet forced into the terminal set, the least
/// `k`-stage cost among action sequences that avoid the terminal set of stage `k - 1`.
/// The result is `m = k + 1` for the first stage `k` that passes the stopping rule, or
/// `m = k` when every state is already in the terminal set of that stage.
pub fn horizon_m_general(
    problem: &SspProblem,
    values: &ValueFunction,
    options: HorizonOptions,
) -> Result<HorizonCertificate> {
    check_uniformly_improvable(problem, values)?;
    let n = problem.num_states();
    let a_min = min_terminal_cost(problem).unwrap_or(0.0);
    let mut inside = vec![false; n];
    inside[problem.terminal()] = true;
    let mut stage = vec![0.0; n];

    let snapshot = |inside: &[bool], stage: &[f64]| -> (Vec<usize>, Vec<Option<f64>>) {
        (
            (0..n).filter(|&i| inside[i]).collect(),
            (0..n).map(|i| (!inside[i]).then_some(stage[i])).collect(),
        )
    };
    let (set0, vals0) = snapshot(&inside, &stage);
    let mut terminal_sets = vec![set0];
    let mut stage_values = vec![vals0];

    let passes = |stage_value: f64, bound: f64| match options.criterion {
        HorizonCriterion::WithTerminalCost => stage_value + a_min > bound,
        HorizonCriterion::StageValueOnly => stage_value > bound,
    };

    let mut k = 0;
    loop {
        if (0..n).all(|i| inside[i] || passes(stage[i], values[i])) {
            // States in T_k stop within k stages, the others within k + 1.
            let m = if inside.iter().all(|&x| x) { k.max(1) } else { k + 1 };
            return Ok(HorizonCertificate { m, terminal_sets, stage_values, a_min, criterion: options.criterion });
        }
        if k >= options.max_stages {
            return Err(SspError::HorizonCapExceeded { stages: k });
        }
        k += 1;
        let mut next_inside = inside.clone();
        let mut next_stage = stage.clone();
        for i in (0..n).filter(|&i| !inside[i]) {
            let avoiding = (0..problem.num_actions())
                .filter(|&u| problem.successors(i, u).all(|(j, _, _)| !inside[j]))
                .map(|u| q_value(problem, i, u, &stage))
                .reduce(f64::min);
            match avoiding {
                Some(v) => next_stage[i] = v,
                None => next_inside[i] = true,
            }
        }
        let stalled = next_inside == inside && (0..n).all(|i| next_inside[i] || next_stage[i] == stage[i]);
        if stalled {
            // Same state as the previous stage: the search can never pass.
            return Err(SspError::HorizonCapExceeded { stages: k });
        }
        inside = next_inside;
        stage = next_stage;
        let (set, vals) = snapshot(&inside, &stage);
        terminal_sets.push(set);
        stage_values.push(vals);
    }
}

/// Steps bound `N(i) = m / rho_m` with `rho_m = p_n^(m-1) * p_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooseBound {
    /// Smallest nonzero probability of entering the terminal.
    pub p_t: f64,
    /// Smallest nonzero probability of any other move (1 when there is none).
    pub p_n: f64,
    pub rho_m: f64,
    pub steps: Vec<f64>,
}

pub fn loose_general_bound(problem: &SspProblem, cert: &HorizonCertificate) -> Result<LooseBound> {
    let t = problem.terminal();
    let mut p_t = f64::INFINITY;
    let mut p_n = f64::INFINITY;
    for i in problem.nonterminal_states() {
        for u in 0..problem.num_actions() {
            for (j, p, _) in problem.successors(i, u) {
                if j == t {
                    p_t = p_t.min(p);
                } else {
                    p_n = p_n.min(p);
                }
            }
        }
    }
    if p_t.is_infinite() {
        return Err(SspError::NoTerminalTransition);
    }
    if p_n.is_infinite() {
        p_n = 1.0;
    }
    let m = cert.m as f64;
    let rho_m = p_n.powi(cert.m as i32 - 1) * p_t;
    let per_state = if rho_m > 0.0 { m / rho_m } else { f64::INFINITY };
    let steps = (0..problem.num_states()).map(|i| if i == t { 0.0 } else { per_state }).collect();
    Ok(LooseBound { p_t, p_n, rho_m, steps })
}

/// Complete bound computation for one value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub residual: f64,
    pub c_under: f64,
    pub c_bar: f64,
    /// `N(i)` after overrides; 0 at the terminal.
    pub steps_bound: Vec<f64>,
    pub per_state_bound: Vec<f64>,
    /// The `N` used for the global bound: the largest non-overridden `N(i)`.
    pub max_steps: f64,
    pub global_bound: f64,
    /// States whose `N(i)` was replaced by 1 and left out of the global maximum.
    pub overrides: Vec<usize>,
    /// States whose raw `N(i)` fell below 1 and was clamped.
    pub clamped: Vec<usize>,
    pub method: StepsMethod,
    /// Some bound is infinite.
    pub vacuous: bool,
    /// Positive-cost method only: `N(i)` using the expected-cost refinement of `b`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refined_steps_bound: Option<Vec<f64>>,
    /// General method only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<HorizonCertificate>,
}

/// Residual, steps bounds and per-state and global suboptimality bounds for a uniformly
/// improvable `J`.
pub fn bounds_report(problem: &SspProblem, values: &ValueFunction, method: BoundsMethod) -> Result<BoundsReport> {
    check_uniformly_improvable(problem, values)?;
    let Residual { residual, c_under, c_bar } = dp::bellman_residual(problem, values)?;
    let mut refined_steps_bound = None;
    let mut horizon = None;
    let (mut steps, mut method_used) = match method.resolve(problem) {
        BoundsMethod::PositiveCost => {
            refined_steps_bound = Some(steps_bound_positive_costs_expected(problem, values)?);
            (steps_bound_positive_costs(problem, values)?, StepsMethod::PositiveCost)
        }
        BoundsMethod::AllProper => (steps_bound_all_proper(problem)?, StepsMethod::AllProper),
        BoundsMethod::General | BoundsMethod::Auto => {
            let cert = horizon_m_general(problem, values, HorizonOptions::default())?;
            let loose = loose_general_bound(problem, &cert)?;
            horizon = Some(cert);
            (loose.steps, StepsMethod::GeneralLoose)
        }
    };
    let clamped = if method_used == StepsMethod::PositiveCost {
        let a = min_terminal_cost(problem).unwrap_or(0.0);
        problem.nonterminal_states().filter(|&i| values[i] < a).collect()
    } else {
        Vec::new()
    };
    let overrides = override_states(problem);
    for &i in &overrides {
        steps[i] = 1.0;
    }
    let nonterminal: Vec<usize> = problem.nonterminal_states().collect();
    let counted: Vec<usize> = nonterminal.iter().copied().filter(|i| !overrides.contains(i)).collect();
    if !nonterminal.is_empty() && counted.is_empty() {
        method_used = StepsMethod::Override;
    }
    let n_max = if counted.is_empty() {
        if nonterminal.is_empty() { 0.0 } else { 1.0 }
    } else {
        counted.iter().map(|&i| steps[i]).fold(0.0, f64::max)
    };
    let per_state_bound: Vec<f64> = steps.iter().map(|&n| scaled(residual, n).unwrap_or(f64::INFINITY)).collect();
    let global_bound = scaled(residual, n_max).unwrap_or(f64::INFINITY);
    let vacuous = global_bound.is_infinite() || per_state_bound.iter().any(|b| b.is_infinite());
    Ok(BoundsReport {
        residual,
        c_under,
        c_bar,
        steps_bound: steps,
        per_state_bound,
        max_steps: n_max,
        global_bound,
        overrides,
        clamped,
        method: method_used,
        vacuous,
        refined_steps_bound,
        horizon,
    })
}
