//! Small bundled instances and seeded random instance generators used by the tests,
//! the benchmarks and the CLI.

use rand::Rng;

use crate::model::{DiscountedMdp, SspProblem};

/// Index of the terminal state in [`bertsekas_tsitsiklis`].
pub const BT_TERMINAL: usize = 0;
/// Index of the single nonterminal state in [`bertsekas_tsitsiklis`].
pub const BT_STATE: usize = 1;
/// Action moving straight to the terminal at cost 2.
pub const BT_GO: usize = 0;
/// Action looping on the nonterminal state at cost 1.
pub const BT_STAY: usize = 1;

/// The two-state instance on which the DP operator is not a contraction: one nonterminal
/// state with a cost-2 move to the terminal and a cost-1 self-loop.
pub fn bertsekas_tsitsiklis() -> SspProblem {
    SspProblem::builder(2, 2, BT_TERMINAL)
        .absorbing_terminal()
        .transition(BT_STATE, BT_GO, BT_TERMINAL, 1.0, 2.0)
        .transition(BT_STATE, BT_STAY, BT_STATE, 1.0, 1.0)
        .build()
        .expect("bundled instance is valid")
}

/// Normalized random weights over `k` slots, with roughly `sparsity` of them zeroed.
/// `keep` is always left positive so every row has support.
fn random_row<R: Rng>(rng: &mut R, k: usize, keep: usize, sparsity: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k)
        .map(|j| {
            if j != keep && rng.gen::<f64>() < sparsity {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    fix_row_sum(&mut w, keep);
    w
}

/// Pushes the rounding error of a normalized row onto one entry so the sum is 1 to within
/// an ulp or two.
fn fix_row_sum(w: &mut [f64], onto: usize) {
    let others: f64 = w.iter().enumerate().filter(|&(j, _)| j != onto).map(|(_, x)| x).sum();
    w[onto] = 1.0 - others;
}

/// Random SSP instance that always contains a proper policy and satisfies the
/// infinite-cost condition on improper policies, with costs of both signs.
///
/// States are ranked; action 0 from each state moves with positive probability to a
/// lower-ranked state or the terminal, so "always play action 0" is proper. Nonterminal
/// transition costs start positive and are then reshaped by a random potential
/// `phi(i) - phi(j)`, which leaves the cost of every cycle positive while producing costs
/// of mixed sign.
pub fn random_ssp<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize) -> SspProblem {
    let n = rng.gen_range(2..=max_states.max(2));
    let a = rng.gen_range(1..=max_actions.max(1));
    let t = rng.gen_range(0..n);
    let mut order: Vec<usize> = (0..n).filter(|&i| i != t).collect();
    for k in (1..order.len()).rev() {
        order.swap(k, rng.gen_range(0..=k));
    }
    let mut phi = vec![0.0; n];
    for i in 0..n {
        if i != t {
            phi[i] = rng.gen_range(-2.0..2.0);
        }
    }
    let mut b = SspProblem::builder(n, a, t).absorbing_terminal();
    for (rank, &i) in order.iter().enumerate() {
        for u in 0..a {
            let keep = if u == 0 {
                if rank == 0 || rng.gen_bool(0.5) { t } else { order[rng.gen_range(0..rank)] }
            } else {
                rng.gen_range(0..n)
            };
            let row = random_row(rng, n, keep, 0.5);
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    let base = if j == t { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.05..1.0) };
                    b = b.transition(i, u, j, p, base + phi[i] - phi[j]);
                }
            }
        }
    }
    b.build().expect("generator produces valid rows")
}

/// Random instance in which every policy is proper: every action reaches the terminal
/// with probability at least 0.05 in one step. Costs are arbitrary in `[-1, 1]`.
pub fn random_all_proper<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize) -> SspProblem {
    let n = rng.gen_range(2..=max_states.max(2));
    let a = rng.gen_range(1..=max_actions.max(1));
    let t = rng.gen_range(0..n);
    let mut b = SspProblem::builder(n, a, t).absorbing_terminal();
    for i in (0..n).filter(|&i| i != t) {
        for u in 0..a {
            let p_term = rng.gen_range(0.05..0.6);
            let mut row = random_row(rng, n, i, 0.4);
            row[t] = 0.0;
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x *= (1.0 - p_term) / s);
            row[t] = p_term;
            fix_row_sum(&mut row, t);
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    b = b.transition(i, u, j, p, rng.gen_range(-1.0..1.0));
                }
            }
        }
    }
    b.build().expect("generator produces valid rows")
}

/// Random dense discounted MDP with costs in `[-1, 1]`.
pub fn random_discounted<R: Rng>(rng: &mut R, num_states: usize, num_actions: usize) -> DiscountedMdp {
    let mut prob = Vec::with_capacity(num_states);
    let mut cost = Vec::with_capacity(num_states);
    for _ in 0..num_states {
        let mut p_s = Vec::with_capacity(num_actions);
        let mut g_s = Vec::with_capacity(num_actions);
        for _ in 0..num_actions {
            let keep = rng.gen_range(0..num_states);
            p_s.push(random_row(rng, num_states, keep, 0.3));
            g_s.push((0..num_states).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        prob.push(p_s);
        cost.push(g_s);
    }
    DiscountedMdp { num_states, num_actions, prob, cost }
}
