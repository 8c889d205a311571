//! Per-iteration summaries of solver traces.
//!
//! Each row reports the worst state value, the steps bound `m` (largest non-overridden
//! `N(i)`), and an error estimate `m * residual`. The residual column is lagged by one
//! row: row `k` shows `||T J_{k-1} - J_{k-1}||`, the residual that produced `J_k`.

use serde::{Deserialize, Serialize};

use crate::bounds::{bounds_report, override_states, BoundsMethod};
use crate::dp::{is_uniformly_improvable, IterationTrace};
use crate::error::Result;
use crate::io::Convention;
use crate::model::{SspProblem, ValueFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// Worst value over non-overridden nonterminal states in the presented convention
    /// (minimum in reward form, maximum in cost form).
    pub j_under: f64,
    /// `None` when `J_k` is not uniformly improvable.
    pub m: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<f64>,
}

/// Worst non-overridden value of `values` (cost form) as presented under `convention`.
pub fn worst_value(problem: &SspProblem, values: &ValueFunction, convention: Convention) -> f64 {
    let overrides = override_states(problem);
    let mut states: Vec<usize> = problem.nonterminal_states().filter(|i| !overrides.contains(i)).collect();
    if states.is_empty() {
        states = problem.nonterminal_states().collect();
    }
    let worst_cost = states.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
    match convention {
        Convention::Cost => worst_cost,
        Convention::Reward => -worst_cost,
    }
}

/// Rows for every record of `trace`.
pub fn trace_rows(
    problem: &SspProblem,
    trace: &IterationTrace,
    method: BoundsMethod,
    convention: Convention,
) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::with_capacity(trace.len());
    for (k, rec) in trace.records.iter().enumerate() {
        let m = if is_uniformly_improvable(problem, &rec.values)? {
            Some(bounds_report(problem, &rec.values, method)?.max_steps)
        } else {
            None
        };
        let residual = k.checked_sub(1).map(|p| trace.records[p].residual);
        let error = match (m, residual) {
            (Some(m), Some(r)) => Some(if r == 0.0 { 0.0 } else { m * r }),
            _ => None,
        };
        rows.push(TraceRow { iter: rec.iter, j_under: worst_value(problem, &rec.values, convention), m, residual, error });
    }
    Ok(rows)
}
