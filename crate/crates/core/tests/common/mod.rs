//! Independent reference computations for integration tests. Nothing here calls the
//! solver code under test.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssp_core::SspProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-Jordan with full pivot search per column. `None` if singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for c in 0..n {
            a[col][c] /= d;
        }
        b[col] /= d;
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for c in 0..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some(b)
}

/// States (including the terminal) that reach the terminal with positive probability
/// within `steps` moves under the deterministic policy `actions`.
pub fn reaches_within(p: &SspProblem, actions: &[usize], steps: usize) -> Vec<bool> {
    let t = p.terminal();
    let n = p.num_states();
    let mut ok = vec![false; n];
    ok[t] = true;
    for _ in 0..steps {
        let prev = ok.clone();
        for i in 0..n {
            if !prev[i] {
                ok[i] = (0..n).any(|j| prev[j] && p.prob(i, actions[i], j) > 0.0);
            }
        }
    }
    ok
}

pub fn is_proper(p: &SspProblem, actions: &[usize]) -> bool {
    reaches_within(p, actions, p.num_states()).iter().all(|&b| b)
}

/// Solves `x = r + Q x` over nonterminal states for a deterministic policy, where
/// `r(i)` is given per state. `None` for improper policies.
fn absorb(p: &SspProblem, actions: &[usize], r: impl Fn(usize) -> f64) -> Option<Vec<f64>> {
    if !is_proper(p, actions) {
        return None;
    }
    let t = p.terminal();
    let states: Vec<usize> = (0..p.num_states()).filter(|&i| i != t).collect();
    let a: Vec<Vec<f64>> = states
        .iter()
        .map(|&i| states.iter().map(|&j| f64::from(i == j) - p.prob(i, actions[i], j)).collect())
        .collect();
    let b: Vec<f64> = states.iter().map(|&i| r(i)).collect();
    let x = solve_dense(a, b)?;
    let mut out = vec![0.0; p.num_states()];
    for (k, &i) in states.iter().enumerate() {
        out[i] = x[k];
    }
    Some(out)
}

pub fn policy_value(p: &SspProblem, actions: &[usize]) -> Option<Vec<f64>> {
    absorb(p, actions, |i| (0..p.num_states()).map(|j| p.prob(i, actions[i], j) * p.cost(i, actions[i], j)).sum())
}

pub fn expected_steps(p: &SspProblem, actions: &[usize]) -> Option<Vec<f64>> {
    absorb(p, actions, |_| 1.0)
}

pub fn all_policies(p: &SspProblem) -> Vec<Vec<usize>> {
    let n = p.num_states();
    let a = p.num_actions();
    let total = a.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let u = code % a;
                    code /= a;
                    u
                })
                .collect()
        })
        .collect()
}

/// Elementwise minimum of `J_mu` over all proper deterministic policies, and a policy
/// attaining it in every state.
pub fn brute_force_optimum(p: &SspProblem) -> (Vec<f64>, Vec<usize>) {
    let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
    for pol in all_policies(p) {
        if let Some(v) = policy_value(p, &pol) {
            let better = match &best {
                None => true,
                Some((b, _)) => v.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() < -1e-12,
            };
            if better {
                best = Some((v, pol));
            }
        }
    }
    best.expect("at least one proper policy")
}

/// `TJ` computed directly from the transition tensor.
pub fn backup(p: &SspProblem, j: &[f64]) -> Vec<f64> {
    (0..p.num_states())
        .map(|i| {
            (0..p.num_actions())
                .map(|u| (0..p.num_states()).map(|k| p.prob(i, u, k) * (p.cost(i, u, k) + j[k])).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
