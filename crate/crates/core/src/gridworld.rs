//! The 4x3 navigation gridworld and reproduction of its published error-bound tables.
//!
//! ```text
//!   0   1   2  +1        (+1 is state 3)
//!   4  ###  5  -1        (-1 is state 6)
//!   7   8   9  10
//! ```
//!
//! Moves go the intended way with probability 0.8 and slip to each perpendicular
//! direction with probability 0.1. Bumping into the wall or the edge leaves the agent in
//! place. Every move costs 0.04. Any action in an exit cell moves to the terminal
//! (state 11) and pays the exit reward, with no step cost.

use serde::{Deserialize, Serialize};

use crate::bounds::{steps_bound_positive_costs, BoundsMethod};
use crate::dp::{evaluate_policy, policy_iteration, value_iteration, Algorithm, IterationTrace};
use crate::error::{Result, SspError};
use crate::io::Convention;
use crate::model::{SspProblem, ValueFunction};
use crate::properness::uniform_random_policy;
use crate::tables::{trace_rows, TraceRow};

pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;

/// Row/column offsets of the four compass actions, indexed by action.
const MOVES: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// Layout and dynamics of a rectangular gridworld in reward form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Blocked cells as `(row, col)`, row 0 at the top.
    pub walls: Vec<(usize, usize)>,
    /// Exit cells as `(row, col, reward)`.
    pub exits: Vec<(usize, usize, f64)>,
    pub step_reward: f64,
    pub p_intended: f64,
    /// Probability of slipping to each perpendicular direction.
    pub p_slip: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 4,
            height: 3,
            walls: vec![(1, 1)],
            exits: vec![(0, 3, 1.0), (1, 3, -1.0)],
            step_reward: -0.04,
            p_intended: 0.8,
            p_slip: 0.1,
        }
    }
}

impl GridSpec {
    /// Open cells in row-major order; the position in this list is the state index.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|cell| !self.walls.contains(cell))
            .collect()
    }

    fn state_of(&self, cells: &[(usize, usize)], cell: (usize, usize)) -> usize {
        cells.iter().position(|&c| c == cell).expect("open cell")
    }

    /// Cell reached by trying to move in `dir`; bumps stay put.
    fn step(&self, (r, c): (usize, usize), dir: usize) -> (usize, usize) {
        let (dr, dc) = MOVES[dir];
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        if nr < 0 || nc < 0 || nr >= self.height as i64 || nc >= self.width as i64 {
            return (r, c);
        }
        let next = (nr as usize, nc as usize);
        if self.walls.contains(&next) {
            (r, c)
        } else {
            next
        }
    }

    /// `(next_state, probability)` outcomes of `action` in `cell`, with repeated
    /// destinations merged.
    pub fn outcomes(&self, cells: &[(usize, usize)], cell: (usize, usize), action: usize) -> Vec<(usize, f64)> {
        let left = (action + 3) % 4;
        let right = (action + 1) % 4;
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
        for (dir, p) in [(action, self.p_intended), (left, self.p_slip), (right, self.p_slip)] {
            let j = self.state_of(cells, self.step(cell, dir));
            match out.iter_mut().find(|(k, _)| *k == j) {
                Some((_, q)) => *q += p,
                None => out.push((j, p)),
            }
        }
        out.sort_by_key(|&(j, _)| j);
        out
    }

    /// Cost-form SSP instance; the terminal is the state after the last open cell.
    pub fn build(&self) -> Result<SspProblem> {
        let cells = self.cells();
        let t = cells.len();
        let mut b = SspProblem::builder(t + 1, 4, t).absorbing_terminal();
        for (i, &cell) in cells.iter().enumerate() {
            let exit = self.exits.iter().find(|&&(r, c, _)| (r, c) == cell);
            for u in 0..4 {
                match exit {
                    Some(&(_, _, reward)) => b = b.transition(i, u, t, 1.0, -reward),
                    None => {
                        for (j, p) in self.outcomes(&cells, cell, u) {
                            b = b.transition(i, u, j, p, -self.step_reward);
                        }
                    }
                }
            }
        }
        b.build()
    }
}

/// Exit state paying +1.
pub const GOAL_STATE: usize = 3;
/// Exit state paying -1.
pub const PIT_STATE: usize = 6;
pub const GRID_TERMINAL: usize = 11;

/// The standard 4x3 gridworld in cost form.
pub fn build_gridworld() -> SspProblem {
    GridSpec::default().build().expect("standard gridworld is valid")
}

/// Uniform-random-policy value function, the starting point of both tables (cost form).
pub fn uniform_random_values(problem: &SspProblem) -> Result<ValueFunction> {
    evaluate_policy(problem, &uniform_random_policy(problem))
}

/// Traces of the first `iterations` value-iteration backups, or of policy iteration to
/// convergence, both starting from the uniform random policy's values.
pub fn bench_trace(problem: &SspProblem, algorithm: Algorithm, iterations: usize) -> Result<IterationTrace> {
    match algorithm {
        Algorithm::ValueIteration => {
            let start = uniform_random_values(problem)?;
            let mut trace = match value_iteration(problem, &start, f64::MIN_POSITIVE, iterations) {
                Ok(sol) => sol.trace,
                Err(SspError::MaxItersExceeded(sol)) => sol.trace,
                Err(e) => return Err(e),
            };
            trace.records.truncate(iterations + 1);
            Ok(trace)
        }
        Algorithm::PolicyIteration => {
            let result = policy_iteration(problem, &uniform_random_policy(problem), iterations)?;
            Ok(result.trace)
        }
    }
}

/// Rows in the layout of the iteration table: reward-form `J_under`, `m`, lagged
/// residual and `m * residual`.
pub fn run_table1(problem: &SspProblem, algorithm: Algorithm, iterations: usize) -> Result<Vec<TraceRow>> {
    let trace = bench_trace(problem, algorithm, iterations)?;
    trace_rows(problem, &trace, BoundsMethod::PositiveCost, Convention::Reward)
}

/// One policy-iteration step of the per-state table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub iter: usize,
    /// Reward-form values of the nonterminal states.
    pub values: Vec<f64>,
    /// Positive-cost steps bounds `N(i)`, without the one-step override.
    pub steps: Vec<f64>,
}

pub fn run_table2(problem: &SspProblem) -> Result<Vec<Table2Row>> {
    let trace = bench_trace(problem, Algorithm::PolicyIteration, 100)?;
    let states: Vec<usize> = problem.nonterminal_states().collect();
    trace
        .records
        .iter()
        .map(|rec| {
            let steps = steps_bound_positive_costs(problem, &rec.values)?;
            Ok(Table2Row {
                iter: rec.iter,
                values: states.iter().map(|&i| -rec.values[i]).collect(),
                steps: states.iter().map(|&i| steps[i]).collect(),
            })
        })
        .collect()
}

pub const VALUE_TOL: f64 = 0.01;
pub const STEPS_TOL: f64 = 0.1;
pub const RESIDUAL_TOL: f64 = 0.001;
pub const ERROR_TOL: f64 = 0.1;

/// Published iteration-table row: `(J_under, m, residual, error)`.
pub type Table1Entry = (f64, f64, Option<f64>, Option<f64>);

pub const TABLE1_VI: [Table1Entry; 13] = [
    (-1.603, 66.1, None, None),
    (-1.570, 65.3, Some(0.9567), Some(62.428)),
    (-1.430, 61.7, Some(0.8470), Some(52.302)),
    (-1.206, 56.1, Some(0.7379), Some(41.433)),
    (-0.876, 47.9, Some(0.6585), Some(31.551)),
    (-0.256, 32.4, Some(0.6204), Some(20.102)),
    (0.153, 22.2, Some(0.4094), Some(9.075)),
    (0.263, 19.4, Some(0.2568), Some(4.991)),
    (0.310, 18.2, Some(0.1389), Some(2.534)),
    (0.333, 17.7, Some(0.0726), Some(1.282)),
    (0.345, 17.4, Some(0.0613), Some(1.066)),
    (0.351, 17.2, Some(0.0411), Some(0.708)),
    (0.358, 17.1, Some(0.0259), Some(0.442)),
];

pub const TABLE1_PI: [Table1Entry; 5] = [
    (-1.603, 66.1, None, None),
    (-0.885, 48.1, Some(0.9567), Some(46.030)),
    (0.369, 16.8, Some(1.0070), Some(16.880)),
    (0.388, 16.3, Some(0.0186), Some(0.304)),
    (0.388, 16.3, Some(0.0000), Some(0.000)),
];

/// Published per-state table: `(J(i), N(i))` for states 0..=10, one row per
/// policy-iteration step.
pub const TABLE2: [[(f64, f64); 11]; 5] = [
    [
        (-1.28, 58.0), (-0.88, 48.0), (-0.32, 34.0), (1.00, 1.0), (-1.52, 64.1), (-0.92, 49.0),
        (-1.00, 51.0), (-1.60, 66.1), (-1.52, 64.1), (-1.28, 58.1), (-1.22, 56.5),
    ],
    [
        (0.81, 5.7), (0.87, 4.3), (0.92, 3.1), (1.00, 1.0), (0.76, 7.0), (0.66, 9.5),
        (-1.00, 51.0), (0.68, 9.1), (0.39, 16.3), (0.44, 15.0), (-0.88, 48.1),
    ],
    [
        (0.81, 5.7), (0.87, 4.3), (0.92, 3.1), (1.00, 1.0), (0.76, 7.0), (0.66, 9.5),
        (-1.00, 51.0), (0.71, 8.4), (0.66, 9.6), (0.59, 11.2), (0.37, 16.8),
    ],
    [
        (0.81, 5.7), (0.87, 4.3), (0.92, 3.1), (1.00, 1.0), (0.76, 7.0), (0.66, 9.5),
        (-1.00, 51.0), (0.71, 8.4), (0.66, 9.6), (0.61, 10.7), (0.39, 16.3),
    ],
    [
        (0.81, 5.7), (0.87, 4.3), (0.92, 3.1), (1.00, 1.0), (0.76, 7.0), (0.66, 9.5),
        (-1.00, 51.0), (0.71, 8.4), (0.66, 9.6), (0.61, 10.7), (0.39, 16.3),
    ],
];

/// A reproduced entry outside its tolerance, or a missing/extra row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub row: usize,
    pub column: String,
    pub expected: Option<f64>,
    pub got: Option<f64>,
}

fn check(out: &mut Vec<Mismatch>, row: usize, column: &str, expected: Option<f64>, got: Option<f64>, tol: f64) {
    let ok = match (expected, got) {
        (Some(e), Some(g)) => (e - g).abs() <= tol,
        (None, None) => true,
        _ => false,
    };
    if !ok {
        out.push(Mismatch { row, column: column.to_string(), expected, got });
    }
}

pub fn compare_table1(rows: &[TraceRow], expected: &[Table1Entry]) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for k in 0..rows.len().max(expected.len()) {
        match (rows.get(k), expected.get(k)) {
            (Some(r), Some(&(j, m, res, err))) => {
                check(&mut out, k, "J_under", Some(j), Some(r.j_under), VALUE_TOL);
                check(&mut out, k, "m", Some(m), r.m, STEPS_TOL);
                check(&mut out, k, "resid", res, r.residual, RESIDUAL_TOL);
                check(&mut out, k, "error", err, r.error, ERROR_TOL);
            }
            _ => out.push(Mismatch { row: k, column: "row".into(), expected: None, got: None }),
        }
    }
    out
}

pub fn compare_table2(rows: &[Table2Row], expected: &[[(f64, f64); 11]]) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for k in 0..rows.len().max(expected.len()) {
        match (rows.get(k), expected.get(k)) {
            (Some(r), Some(e)) => {
                for (i, &(j, n)) in e.iter().enumerate() {
                    check(&mut out, k, &format!("J({i})"), Some(j), r.values.get(i).copied(), VALUE_TOL);
                    check(&mut out, k, &format!("N({i})"), Some(n), r.steps.get(i).copied(), STEPS_TOL);
                }
            }
            _ => out.push(Mismatch { row: k, column: "row".into(), expected: None, got: None }),
        }
    }
    out
}
