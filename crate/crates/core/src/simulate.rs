//! Seeded rollouts for estimating expected steps to termination.
//!
//! Trial `k` draws from a ChaCha stream selected by `(seed, k)`, so any trial can be
//! replayed on its own and the estimate does not depend on evaluation order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SspError};
use crate::model::{ActionChoice, Policy, SspProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    /// Mean steps to the terminal over rollouts that reached it.
    pub mean: f64,
    /// Half-width of the 95% normal-approximation interval around `mean`.
    pub ci95: f64,
    pub std_error: f64,
    pub completed: usize,
    /// Rollouts that hit the step cap; excluded from the mean.
    pub capped: usize,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn sample_index<R: Rng>(rng: &mut R, weights: impl Iterator<Item = (usize, f64)>) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights {
        acc += w;
        last = k;
        if x < acc {
            return k;
        }
    }
    last
}

/// Runs one rollout and returns the number of transitions until the terminal, or `None`
/// if it did not arrive within `cap` transitions.
fn rollout<P: Policy + ?Sized, R: Rng>(
    problem: &SspProblem,
    policy: &P,
    start: usize,
    cap: usize,
    rng: &mut R,
) -> Option<usize> {
    let t = problem.terminal();
    let mut state = start;
    for steps in 0..=cap {
        if state == t {
            return Some(steps);
        }
        if steps == cap {
            break;
        }
        let action = match policy.choice(state) {
            ActionChoice::Single(u) => u,
            ActionChoice::Mixed(w) => sample_index(rng, w.iter().copied().enumerate().filter(|(_, x)| *x > 0.0)),
        };
        state = sample_index(rng, problem.successors(state, action).map(|(j, p, _)| (j, p)));
    }
    None
}

/// Per-trial steps to termination (`None` for capped rollouts).
pub fn rollout_steps<P: Policy + ?Sized>(
    problem: &SspProblem,
    policy: &P,
    start: usize,
    trials: usize,
    seed: u64,
    cap: usize,
) -> Result<Vec<Option<usize>>> {
    problem.check_state(start)?;
    policy.check(problem)?;
    if trials == 0 || cap == 0 {
        return Err(SspError::InvalidArgument("trials and cap must be at least 1".into()));
    }
    Ok((0..trials)
        .map(|k| rollout(problem, policy, start, cap, &mut trial_rng(seed, k as u64)))
        .collect())
}

/// Sample mean steps to termination from `start` and its 95% half-width.
///
/// With no completed rollouts the mean and interval are NaN.
pub fn monte_carlo_steps<P: Policy + ?Sized>(
    problem: &SspProblem,
    policy: &P,
    start: usize,
    trials: usize,
    seed: u64,
    cap: usize,
) -> Result<MonteCarloEstimate> {
    let outcomes = rollout_steps(problem, policy, start, trials, seed, cap)?;
    let done: Vec<f64> = outcomes.iter().flatten().map(|&s| s as f64).collect();
    let completed = done.len();
    let capped = outcomes.len() - completed;
    if completed == 0 {
        return Ok(MonteCarloEstimate { mean: f64::NAN, ci95: f64::NAN, std_error: f64::NAN, completed, capped });
    }
    let n = completed as f64;
    let mean = done.iter().sum::<f64>() / n;
    let var = if completed > 1 { done.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let std_error = (var / n).sqrt();
    Ok(MonteCarloEstimate { mean, ci95: 1.96 * std_error, std_error, completed, capped })
}
