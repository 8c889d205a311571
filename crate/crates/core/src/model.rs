//! Finite stochastic shortest path instances, value functions and stationary policies.
//!
//! The whole crate works in the cost-minimization convention. Reward-form inputs are
//! converted with [`SspProblem::negate_costs`] at the boundary (see [`crate::io`]).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SspError};

/// Absolute tolerance on transition-row sums and policy weight sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite SSP instance with dense transition and cost tensors indexed `[state][action][next]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SspProblem {
    num_states: usize,
    num_actions: usize,
    terminal: usize,
    prob: Vec<f64>,
    cost: Vec<f64>,
}

impl SspProblem {
    /// Builds an instance and validates it.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        terminal: usize,
        prob: Vec<f64>,
        cost: Vec<f64>,
    ) -> Result<Self> {
        let problem = Self::new_unchecked(num_states, num_actions, terminal, prob, cost)?;
        problem.validate()?;
        Ok(problem)
    }

    /// Builds an instance checking only tensor shapes. Call [`validate`](Self::validate)
    /// before handing the result to any solver.
    pub fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        terminal: usize,
        prob: Vec<f64>,
        cost: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(SspError::DimensionMismatch(
                "an instance needs at least one state and one action".into(),
            ));
        }
        if terminal >= num_states {
            return Err(SspError::IndexOutOfRange {
                what: "terminal state",
                index: terminal,
                limit: num_states,
            });
        }
        let len = num_states * num_actions * num_states;
        if prob.len() != len || cost.len() != len {
            return Err(SspError::DimensionMismatch(format!(
                "expected {len} transition entries, got {} probabilities and {} costs",
                prob.len(),
                cost.len()
            )));
        }
        Ok(Self { num_states, num_actions, terminal, prob, cost })
    }

    pub fn builder(num_states: usize, num_actions: usize, terminal: usize) -> SspBuilder {
        SspBuilder::new(num_states, num_actions, terminal)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    /// All states except the terminal one, in index order.
    pub fn nonterminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states).filter(move |&i| i != self.terminal)
    }

    #[inline]
    fn offset(&self, state: usize, action: usize) -> usize {
        (state * self.num_actions + action) * self.num_states
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.prob[self.offset(state, action) + next]
    }

    #[inline]
    pub fn cost(&self, state: usize, action: usize, next: usize) -> f64 {
        self.cost[self.offset(state, action) + next]
    }

    /// Probability and cost rows for `(state, action)`.
    #[inline]
    pub fn row(&self, state: usize, action: usize) -> (&[f64], &[f64]) {
        let start = self.offset(state, action);
        let end = start + self.num_states;
        (&self.prob[start..end], &self.cost[start..end])
    }

    /// Positive-probability successors of `(state, action)` as `(next, prob, cost)`.
    pub fn successors(
        &self,
        state: usize,
        action: usize,
    ) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let (p, g) = self.row(state, action);
        p.iter()
            .zip(g)
            .enumerate()
            .filter(|(_, (&p, _))| p > 0.0)
            .map(|(j, (&p, &g))| (j, p, g))
    }

    /// Checks row sums, terminal absorption and finiteness of all costs.
    pub fn validate(&self) -> Result<()> {
        let t = self.terminal;
        for i in 0..self.num_states {
            for u in 0..self.num_actions {
                let (p, g) = self.row(i, u);
                for (j, (&pj, &gj)) in p.iter().zip(g).enumerate() {
                    if !(0.0..=1.0).contains(&pj) {
                        return Err(SspError::InvalidProbability {
                            state: i,
                            action: u,
                            next: j,
                            prob: pj,
                        });
                    }
                    if !gj.is_finite() {
                        return Err(SspError::NonfiniteCost { state: i, action: u, next: j });
                    }
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(SspError::RowSumViolation { state: i, action: u, sum });
                }
            }
        }
        for u in 0..self.num_actions {
            if self.prob(t, u, t) != 1.0 {
                return Err(SspError::TerminalNotAbsorbing { action: u });
            }
            if self.cost(t, u, t) != 0.0 {
                return Err(SspError::TerminalCostNonzero { action: u });
            }
        }
        Ok(())
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(SspError::IndexOutOfRange {
                what: "state",
                index: state,
                limit: self.num_states,
            });
        }
        Ok(())
    }

    pub fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.num_actions {
            return Err(SspError::IndexOutOfRange {
                what: "action",
                index: action,
                limit: self.num_actions,
            });
        }
        Ok(())
    }

    /// g(i, u) = sum_j p_ij(u) g(i, u, j).
    pub fn expected_cost(&self, state: usize, action: usize) -> Result<f64> {
        self.check_state(state)?;
        self.check_action(action)?;
        Ok(self.successors(state, action).map(|(_, p, g)| p * g).sum())
    }

    /// Same instance with every transition cost negated. Used to move between the
    /// reward and cost conventions; applying it twice returns the original instance.
    pub fn negate_costs(&self) -> Self {
        let cost = self.cost.iter().map(|&g| if g == 0.0 { 0.0 } else { -g }).collect();
        Self { cost, ..self.clone() }
    }

    /// Copy with one transition probability replaced. The result is not validated.
    pub fn with_prob(&self, state: usize, action: usize, next: usize, prob: f64) -> Self {
        let mut out = self.clone();
        let k = out.offset(state, action) + next;
        out.prob[k] = prob;
        out
    }

    /// Copy with one transition cost replaced. The result is not validated.
    pub fn with_cost(&self, state: usize, action: usize, next: usize, cost: f64) -> Self {
        let mut out = self.clone();
        let k = out.offset(state, action) + next;
        out.cost[k] = cost;
        out
    }

    /// Reduces a discounted MDP to an SSP with one extra terminal state (index
    /// `mdp.num_states`). Every state-action pair moves to the terminal with probability
    /// `1 - beta` at zero cost; original probabilities are scaled by `beta`.
    ///
    /// Values of the reduced problem equal `beta` times the discounted values, so the
    /// two problems share their optimal policies. Every policy of the result is proper.
    pub fn from_discounted(mdp: &DiscountedMdp, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(SspError::InvalidDiscount(beta));
        }
        mdp.validate()?;
        let n = mdp.num_states;
        let a = mdp.num_actions;
        let t = n;
        let mut b = SspBuilder::new(n + 1, a, t).absorbing_terminal();
        for i in 0..n {
            for u in 0..a {
                for j in 0..n {
                    let p = mdp.prob[i][u][j];
                    if p > 0.0 {
                        b = b.transition(i, u, j, beta * p, mdp.cost[i][u][j]);
                    }
                }
                b = b.transition(i, u, t, 1.0 - beta, 0.0);
            }
        }
        b.build()
    }
}

/// Incremental constructor for sparse instance descriptions.
#[derive(Debug)]
pub struct SspBuilder {
    num_states: usize,
    num_actions: usize,
    terminal: usize,
    prob: Vec<f64>,
    cost: Vec<f64>,
    bad_index: Option<SspError>,
}

impl SspBuilder {
    pub fn new(num_states: usize, num_actions: usize, terminal: usize) -> Self {
        let len = num_states * num_actions * num_states;
        Self {
            num_states,
            num_actions,
            terminal,
            prob: vec![0.0; len],
            cost: vec![0.0; len],
            bad_index: None,
        }
    }

    /// Adds the zero-cost terminal self-loop for every action.
    pub fn absorbing_terminal(self) -> Self {
        let t = self.terminal;
        (0..self.num_actions).fold(self, |b, u| b.transition(t, u, t, 1.0, 0.0))
    }

    /// Sets `p_ij(u)` and `g(i, u, j)`, replacing any earlier entry.
    pub fn transition(mut self, state: usize, action: usize, next: usize, prob: f64, cost: f64) -> Self {
        if self.bad_index.is_some() {
            return self;
        }
        for (what, index, limit) in [
            ("state", state, self.num_states),
            ("action", action, self.num_actions),
            ("state", next, self.num_states),
        ] {
            if index >= limit {
                self.bad_index = Some(SspError::IndexOutOfRange { what, index, limit });
                return self;
            }
        }
        let k = (state * self.num_actions + action) * self.num_states + next;
        self.prob[k] = prob;
        self.cost[k] = cost;
        self
    }

    pub fn build_unchecked(self) -> Result<SspProblem> {
        if let Some(e) = self.bad_index {
            return Err(e);
        }
        SspProblem::new_unchecked(self.num_states, self.num_actions, self.terminal, self.prob, self.cost)
    }

    pub fn build(self) -> Result<SspProblem> {
        let p = self.build_unchecked()?;
        p.validate()?;
        Ok(p)
    }
}

/// A discounted MDP given as nested `[state][action][next]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub prob: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<Vec<f64>>>,
}

impl DiscountedMdp {
    pub fn validate(&self) -> Result<()> {
        let shape_ok = |t: &Vec<Vec<Vec<f64>>>| {
            t.len() == self.num_states
                && t.iter().all(|r| {
                    r.len() == self.num_actions && r.iter().all(|c| c.len() == self.num_states)
                })
        };
        if !shape_ok(&self.prob) || !shape_ok(&self.cost) {
            return Err(SspError::DimensionMismatch(
                "discounted MDP tables must be [num_states][num_actions][num_states]".into(),
            ));
        }
        for i in 0..self.num_states {
            for u in 0..self.num_actions {
                let sum: f64 = self.prob[i][u].iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(SspError::RowSumViolation { state: i, action: u, sum });
                }
                if let Some(j) = self.cost[i][u].iter().position(|g| !g.is_finite()) {
                    return Err(SspError::NonfiniteCost { state: i, action: u, next: j });
                }
            }
        }
        Ok(())
    }
}

/// Cost-to-go per state. The terminal entry is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(num_states: usize) -> Self {
        Self(vec![0.0; num_states])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Checks length, finiteness and the pinned terminal entry against `problem`.
    pub fn check(&self, problem: &SspProblem) -> Result<()> {
        if self.0.len() != problem.num_states() {
            return Err(SspError::InvalidValueFunction(format!(
                "{} entries for {} states",
                self.0.len(),
                problem.num_states()
            )));
        }
        if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(SspError::InvalidValueFunction(format!("entry {i} is not finite")));
        }
        if self.0[problem.terminal()] != 0.0 {
            return Err(SspError::InvalidValueFunction("terminal entry must be 0".into()));
        }
        Ok(())
    }

    /// Max-norm distance to `other`.
    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Values with the sign flipped, for reporting in the reward convention.
    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&v| if v == 0.0 { 0.0 } else { -v }).collect())
    }
}

impl std::ops::Deref for ValueFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// How a policy acts in a single state.
#[derive(Debug, Clone, Copy)]
pub enum ActionChoice<'a> {
    Single(usize),
    Mixed(&'a [f64]),
}

/// A stationary policy, deterministic or randomized.
pub trait Policy {
    fn num_states(&self) -> usize;
    fn choice(&self, state: usize) -> ActionChoice<'_>;

    /// Checks the policy's shape against `problem`.
    fn check(&self, problem: &SspProblem) -> Result<()> {
        if self.num_states() != problem.num_states() {
            return Err(SspError::InvalidPolicy(format!(
                "policy covers {} states, problem has {}",
                self.num_states(),
                problem.num_states()
            )));
        }
        for i in 0..self.num_states() {
            match self.choice(i) {
                ActionChoice::Single(u) if u >= problem.num_actions() => {
                    return Err(SspError::InvalidPolicy(format!("action {u} at state {i} out of range")))
                }
                ActionChoice::Mixed(w) if w.len() != problem.num_actions() => {
                    return Err(SspError::InvalidPolicy(format!(
                        "state {i} has {} weights for {} actions",
                        w.len(),
                        problem.num_actions()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Actions played with positive probability in `state`, with their weights.
    fn support(&self, state: usize) -> Vec<(usize, f64)> {
        match self.choice(state) {
            ActionChoice::Single(u) => vec![(u, 1.0)],
            ActionChoice::Mixed(w) => {
                w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(u, &x)| (u, x)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(i) = actions.iter().position(|&u| u >= num_actions) {
            return Err(SspError::InvalidPolicy(format!(
                "action {} at state {i} out of range (limit {num_actions})",
                actions[i]
            )));
        }
        Ok(Self(actions))
    }

    /// Same action everywhere.
    pub fn constant(num_states: usize, action: usize) -> Self {
        Self(vec![action; num_states])
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }
}

impl Policy for DeterministicPolicy {
    fn num_states(&self) -> usize {
        self.0.len()
    }

    fn choice(&self, state: usize) -> ActionChoice<'_> {
        ActionChoice::Single(self.0[state])
    }
}

/// Randomized stationary policy stored as a dense `[state][action]` weight table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    num_actions: usize,
    weights: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = weights.first().map_or(0, Vec::len);
        if num_actions == 0 {
            return Err(SspError::InvalidPolicy("empty weight table".into()));
        }
        for (i, w) in weights.iter().enumerate() {
            if w.len() != num_actions {
                return Err(SspError::InvalidPolicy(format!("ragged weights at state {i}")));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(SspError::InvalidPolicy(format!("negative or non-finite weight at state {i}")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(SspError::InvalidPolicy(format!("weights at state {i} sum to {sum}")));
            }
        }
        Ok(Self { num_actions, weights: weights.concat() })
    }

    /// Weight `1/|U|` on every action everywhere.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let w = 1.0 / num_actions as f64;
        Self { num_actions, weights: vec![w; num_states * num_actions] }
    }

    /// Point mass on the deterministic policy's action.
    pub fn from_deterministic(policy: &DeterministicPolicy, num_actions: usize) -> Self {
        let mut weights = vec![0.0; policy.0.len() * num_actions];
        for (i, &u) in policy.0.iter().enumerate() {
            weights[i * num_actions + u] = 1.0;
        }
        Self { num_actions, weights }
    }

    pub fn weights(&self, state: usize) -> &[f64] {
        &self.weights[state * self.num_actions..(state + 1) * self.num_actions]
    }
}

impl Policy for StochasticPolicy {
    fn num_states(&self) -> usize {
        self.weights.len() / self.num_actions
    }

    fn choice(&self, state: usize) -> ActionChoice<'_> {
        ActionChoice::Mixed(self.weights(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{bertsekas_tsitsiklis, BT_GO, BT_STATE, BT_STAY};

    fn single_terminal() -> SspProblem {
        SspProblem::builder(1, 1, 0).absorbing_terminal().build().unwrap()
    }

    #[test]
    fn minimal_instance_is_valid() {
        let p = single_terminal();
        assert!(p.validate().is_ok());
        assert_eq!(p.expected_cost(0, 0).unwrap(), 0.0);
    }

    #[test]
    fn validate_reports_each_violation() {
        let p = bertsekas_tsitsiklis();
        let t = p.terminal();
        assert!(matches!(
            p.with_prob(BT_STATE, BT_GO, t, 0.99).validate(),
            Err(SspError::RowSumViolation { state: BT_STATE, action: BT_GO, .. })
        ));
        let leaky = p.with_prob(t, 0, t, 0.5).with_prob(t, 0, BT_STATE, 0.5);
        assert!(matches!(leaky.validate(), Err(SspError::TerminalNotAbsorbing { action: 0 })));
        assert!(matches!(
            p.with_cost(t, 1, t, 0.1).validate(),
            Err(SspError::TerminalCostNonzero { action: 1 })
        ));
        assert!(matches!(
            p.with_cost(BT_STATE, BT_STAY, BT_STATE, f64::NAN).validate(),
            Err(SspError::NonfiniteCost { .. })
        ));
        assert!(matches!(
            p.with_prob(BT_STATE, BT_GO, t, -0.0001).validate(),
            Err(SspError::InvalidProbability { .. })
        ));
    }

    #[test]
    fn expected_cost_examples() {
        let p = bertsekas_tsitsiklis();
        assert_eq!(p.expected_cost(BT_STATE, BT_STAY).unwrap(), 1.0);
        assert_eq!(p.expected_cost(BT_STATE, BT_GO).unwrap(), 2.0);
        assert_eq!(p.expected_cost(p.terminal(), 0).unwrap(), 0.0);
        assert!(matches!(p.expected_cost(5, 0), Err(SspError::IndexOutOfRange { .. })));
        assert!(matches!(p.expected_cost(0, 9), Err(SspError::IndexOutOfRange { .. })));
    }

    #[test]
    fn negate_is_an_involution() {
        let p = bertsekas_tsitsiklis();
        let n = p.negate_costs();
        assert_eq!(n.cost(BT_STATE, BT_GO, p.terminal()), -2.0);
        assert_eq!(n.cost(p.terminal(), 0, p.terminal()), 0.0);
        assert_eq!(n.negate_costs(), p);
    }

    #[test]
    fn discounted_reduction_one_state() {
        let mdp = DiscountedMdp {
            num_states: 1,
            num_actions: 1,
            prob: vec![vec![vec![1.0]]],
            cost: vec![vec![vec![3.0]]],
        };
        let p = SspProblem::from_discounted(&mdp, 0.9).unwrap();
        assert_eq!(p.num_states(), 2);
        assert_eq!(p.terminal(), 1);
        assert!((p.prob(0, 0, 1) - 0.1).abs() < 1e-15);
        assert_eq!(p.prob(0, 0, 0), 0.9);
        assert_eq!(p.cost(0, 0, 1), 0.0);
    }

    #[test]
    fn discounted_reduction_halves_probabilities() {
        let mdp = DiscountedMdp {
            num_states: 2,
            num_actions: 1,
            prob: vec![vec![vec![0.25, 0.75]], vec![vec![0.6, 0.4]]],
            cost: vec![vec![vec![1.0, 2.0]], vec![vec![0.0, -1.0]]],
        };
        let p = SspProblem::from_discounted(&mdp, 0.5).unwrap();
        assert_eq!(p.prob(0, 0, 0), 0.125);
        assert_eq!(p.prob(0, 0, 1), 0.375);
        assert_eq!(p.prob(1, 0, 0), 0.3);
        assert_eq!(p.prob(1, 0, 1), 0.2);
        for i in 0..2 {
            let s: f64 = p.row(i, 0).0.iter().sum();
            assert!((s - 1.0).abs() <= ROW_SUM_TOL);
        }
    }

    #[test]
    fn discount_outside_unit_interval_rejected() {
        let mdp = DiscountedMdp {
            num_states: 1,
            num_actions: 1,
            prob: vec![vec![vec![1.0]]],
            cost: vec![vec![vec![0.0]]],
        };
        for beta in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(SspProblem::from_discounted(&mdp, beta), Err(SspError::InvalidDiscount(_))));
        }
    }

    #[test]
    fn policy_constructors_validate() {
        assert!(DeterministicPolicy::new(vec![0, 2], 2).is_err());
        assert!(StochasticPolicy::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(StochasticPolicy::new(vec![vec![-0.5, 1.5]]).is_err());
        let u = StochasticPolicy::uniform(3, 2);
        assert_eq!(u.weights(1), &[0.5, 0.5]);
        let d = DeterministicPolicy::new(vec![1, 0, 1], 2).unwrap();
        let s = StochasticPolicy::from_deterministic(&d, 2);
        assert_eq!(s.weights(0), &[0.0, 1.0]);
        assert_eq!(s.support(0), vec![(1, 1.0)]);
    }

    #[test]
    fn value_function_checks() {
        let p = bertsekas_tsitsiklis();
        assert!(ValueFunction::new(vec![0.0, 1.0]).check(&p).is_ok());
        assert!(ValueFunction::new(vec![1.0, 1.0]).check(&p).is_err());
        assert!(ValueFunction::new(vec![0.0]).check(&p).is_err());
        assert!(ValueFunction::new(vec![0.0, f64::INFINITY]).check(&p).is_err());
    }
}
