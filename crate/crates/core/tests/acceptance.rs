//! Acceptance suite. Prints one PASS/FAIL line per criterion. Exits nonzero on failure
//! only when SSP_ACCEPTANCE_STRICT=1.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use ssp_core::bounds::*;
use ssp_core::dp::*;
use ssp_core::gridworld::*;
use ssp_core::instances::*;
use ssp_core::properness::{is_proper as lib_is_proper, uniform_random_policy};
use ssp_core::simulate::{monte_carlo_steps, rollout_steps};
use ssp_core::tables::TraceRow;
use ssp_core::{DeterministicPolicy, SspProblem, ValueFunction};

const TABLE_TIME: Duration = Duration::from_secs(1);
const THEOREM2_TIME: Duration = Duration::from_secs(30);
const SOUNDNESS_TIME: Duration = Duration::from_secs(60);
const MC_TIME: Duration = Duration::from_secs(10);

const THEOREM2_INSTANCES: usize = 1000;
const SOUNDNESS_INSTANCES: usize = 500;
const STRUCTURAL_TRIPLES: usize = 1000;
const DISCOUNTED_TRIALS: usize = 100_000;
const GRID_TRIALS: usize = 10_000;
const SEED: u64 = 20240611;

const IMPROVE_TOL: f64 = 1e-9;
const SOUNDNESS_TOL: f64 = 1e-8;
const DISCOUNT_TOL: f64 = 1e-10;
const FIXED_POINT_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if took > limit {
        o.pass = false;
        o.detail.push_str(&format!("; runtime {took:.2?} over limit {limit:?}"));
    } else {
        o.detail.push_str(&format!("; {took:.2?}"));
    }
    o
}

fn describe(mismatches: &[Mismatch], shown: usize) -> String {
    let list: Vec<String> = mismatches
        .iter()
        .take(shown)
        .map(|m| match (m.expected, m.got) {
            (Some(e), Some(g)) => format!("row {} {} {e} vs {g:.4}", m.row, m.column),
            _ => format!("row {} {} missing", m.row, m.column),
        })
        .collect();
    let more = if mismatches.len() > shown { format!(", +{} more", mismatches.len() - shown) } else { String::new() };
    format!("{}{more}", list.join(", "))
}

fn table2(problem: &SspProblem) -> Outcome {
    let rows = match run_table2(problem) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let bad = compare_table2(&rows, &TABLE2);
    if bad.is_empty() {
        outcome(true, format!("{} rows x 11 states within J +-{VALUE_TOL}, N +-{STEPS_TOL}", rows.len()))
    } else {
        outcome(false, format!("{} of 110 cells off: {}", bad.len(), describe(&bad, 4)))
    }
}

fn table1(problem: &SspProblem) -> Outcome {
    let run = || -> ssp_core::Result<(Vec<TraceRow>, Vec<TraceRow>, usize)> {
        let vi = run_table1(problem, Algorithm::ValueIteration, 12)?;
        let pi = run_table1(problem, Algorithm::PolicyIteration, 100)?;
        let improvements = policy_iteration(problem, &uniform_random_policy(problem), 100)?.improvements;
        Ok((vi, pi, improvements))
    };
    let (vi, pi, improvements) = match run() {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let bad_vi = compare_table1(&vi, &TABLE1_VI);
    let bad_pi = compare_table1(&pi, &TABLE1_PI);
    let pass = bad_vi.is_empty() && bad_pi.is_empty() && improvements == 4;
    let mut detail = format!(
        "VI {} rows, {} cells off; PI {} rows, {} cells off; PI improvements {improvements} (want 4)",
        vi.len(),
        bad_vi.len(),
        pi.len(),
        bad_pi.len()
    );
    if !bad_vi.is_empty() {
        detail.push_str(&format!("; VI: {}", describe(&bad_vi, 3)));
    }
    if !bad_pi.is_empty() {
        detail.push_str(&format!("; PI: {}", describe(&bad_pi, 3)));
    }
    outcome(pass, detail)
}

fn discounted() -> Outcome {
    let beta = 0.9;
    let mdp = random_discounted(&mut rng(SEED), 5, 3);
    let p = match SspProblem::from_discounted(&mdp, beta) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let run = || -> ssp_core::Result<Outcome> {
        let j = evaluate_policy(&p, &uniform_random_policy(&p))?;
        let steps = steps_bound_all_proper(&p)?;
        let steps_ok = p.nonterminal_states().all(|i| (steps[i] - 10.0).abs() < DISCOUNT_TOL);
        let bound = global_bound(&p, &j, &steps)?;
        let closed_form = bellman_residual(&p, &j)?.residual / (1.0 - beta);
        let bound_ok = (bound - closed_form).abs() <= DISCOUNT_TOL;
        let mu = greedy_policy(&p, &j)?;
        let mc = monte_carlo_steps(&p, &mu, 0, DISCOUNTED_TRIALS, SEED, 100_000)?;
        let mc_ok = mc.capped == 0 && (mc.mean - 10.0).abs() <= 3.0 * mc.std_error;
        Ok(outcome(
            steps_ok && bound_ok && mc_ok,
            format!(
                "N = 10: {steps_ok}; global bound {bound:.12} vs residual/(1-beta) {closed_form:.12}; \
                 MC mean {:.4} +- {:.4} (3 SE) over {DISCOUNTED_TRIALS} trials",
                mc.mean,
                3.0 * mc.std_error
            ),
        ))
    };
    run().unwrap_or_else(|e| outcome(false, e.to_string()))
}

fn theorem2() -> Outcome {
    let mut r = rng(SEED + 2);
    for k in 0..THEOREM2_INSTANCES {
        let p = random_ssp(&mut r, 8, 4);
        let check = || -> ssp_core::Result<Option<String>> {
            let j = evaluate_policy(&p, &uniform_random_policy(&p))?;
            if !is_uniformly_improvable(&p, &j)? {
                return Ok(Some("uniform-random value not uniformly improvable".into()));
            }
            let mu = greedy_policy(&p, &j)?;
            if !lib_is_proper(&p, &mu).proper || !is_proper(&p, mu.actions()) {
                return Ok(Some("greedy policy improper".into()));
            }
            let j_mu = evaluate_policy(&p, &mu)?;
            if let Some(i) = (0..p.num_states()).find(|&i| j_mu[i] > j[i] + IMPROVE_TOL) {
                return Ok(Some(format!("J_greedy({i}) = {} > J({i}) = {}", j_mu[i], j[i])));
            }
            Ok(None)
        };
        match check() {
            Ok(None) => {}
            Ok(Some(msg)) => return outcome(false, format!("instance {k}: {msg}")),
            Err(e) => return outcome(false, format!("instance {k}: {e}")),
        }
    }
    outcome(true, format!("{THEOREM2_INSTANCES} instances, J_greedy <= J within {IMPROVE_TOL:e}"))
}

/// `J*` by value iteration to 1e-12 with the reference backup.
fn reference_optimum(p: &SspProblem, start: &[f64]) -> Vec<f64> {
    let mut j = start.to_vec();
    loop {
        let next = backup(p, &j);
        let diff = next.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        j = next;
        if diff < 1e-12 {
            return j;
        }
    }
}

fn soundness() -> Outcome {
    let mut r = rng(SEED + 5);
    let mut checked = 0usize;
    for k in 0..SOUNDNESS_INSTANCES {
        let p = random_all_proper(&mut r, 6, 3);
        let run = || -> ssp_core::Result<Option<String>> {
            let j0 = evaluate_policy(&p, &uniform_random_policy(&p))?;
            let star = reference_optimum(&p, &j0);
            let star_pol = greedy_policy(&p, &ValueFunction::new(star.clone()))?;
            let n_star = expected_steps(&p, star_pol.actions()).expect("all policies proper");
            let mut j = j0;
            for sweep in 0..=5 {
                let mu = greedy_policy(&p, &j)?;
                let j_mu = policy_value(&p, mu.actions()).expect("all policies proper");
                let n_mu = expected_steps(&p, mu.actions()).expect("all policies proper");
                let sandwich = theorem1_bounds(&p, &j, &n_star, &n_mu)?;
                let report = bounds_report(&p, &j, BoundsMethod::Auto)?;
                for i in 0..p.num_states() {
                    let fails = [
                        (sandwich.lower[i] <= star[i] + SOUNDNESS_TOL, "lower sandwich"),
                        (star[i] <= j_mu[i] + SOUNDNESS_TOL, "J* <= J_mu"),
                        (j_mu[i] <= sandwich.upper[i] + SOUNDNESS_TOL, "upper sandwich"),
                        ((star[i] - j[i]).abs() <= report.per_state_bound[i] + SOUNDNESS_TOL, "per-state bound"),
                    ];
                    if let Some((_, what)) = fails.iter().find(|(ok, _)| !ok) {
                        return Ok(Some(format!("sweep {sweep}, state {i}: {what}")));
                    }
                }
                j = bellman_backup(&p, &j)?;
            }
            Ok(None)
        };
        match run() {
            Ok(None) => checked += 1,
            Ok(Some(msg)) => return outcome(false, format!("instance {k}: {msg}")),
            Err(e) => return outcome(false, format!("instance {k}: {e}")),
        }
    }
    outcome(true, format!("{checked} instances x 6 value functions within {SOUNDNESS_TOL:e}"))
}

fn gridworld_steps(problem: &SspProblem) -> Outcome {
    let run = || -> ssp_core::Result<Outcome> {
        let solved = policy_iteration(problem, &uniform_random_policy(problem), 100)?;
        let n = steps_bound_positive_costs(problem, &solved.value)?;
        let overrides = override_states(problem);
        let mut worst = String::new();
        let mut pass = true;
        let mut slack = f64::INFINITY;
        for i in problem.nonterminal_states().filter(|i| !overrides.contains(i)) {
            let mc = monte_carlo_steps(problem, &solved.policy, i, GRID_TRIALS, SEED + i as u64, 1_000_000)?;
            let upper = mc.mean + 3.0 * mc.ci95;
            if mc.capped > 0 || upper > n[i] {
                pass = false;
                worst = format!("state {i}: {upper:.3} > N = {:.3}", n[i]);
            }
            if n[i] - upper < slack {
                slack = n[i] - upper;
                if pass {
                    worst = format!("tightest state {i}: mean + 3 ci = {upper:.3} <= N = {:.3}", n[i]);
                }
            }
        }
        Ok(outcome(pass, format!("{GRID_TRIALS} trials per state; {worst}")))
    };
    run().unwrap_or_else(|e| outcome(false, e.to_string()))
}

fn certificate(problem: &SspProblem) -> Outcome {
    let run = || -> ssp_core::Result<Outcome> {
        let bt = bertsekas_tsitsiklis();
        let go = DeterministicPolicy::constant(2, BT_GO);
        let j = evaluate_policy(&bt, &go)?;
        let cert = horizon_m_general(&bt, &j, HorizonOptions::default())?;
        let loose = loose_general_bound(&bt, &cert)?;
        let bt_ok = cert.m == 2 && (loose.steps[BT_STATE] - 2.0).abs() < 1e-12;

        let solved = policy_iteration(problem, &uniform_random_policy(problem), 100)?;
        let grid = horizon_m_general(problem, &solved.value, HorizonOptions::default())?;
        let mu = greedy_policy(problem, &solved.value)?;
        let mut grid_ok = true;
        let mut min_fraction = 1.0f64;
        for i in problem.nonterminal_states() {
            let runs = rollout_steps(problem, &mu, i, 1000, SEED + 7, grid.m)?;
            let fraction = runs.iter().filter(|r| r.is_some()).count() as f64 / runs.len() as f64;
            min_fraction = min_fraction.min(fraction);
            grid_ok &= fraction > 0.0;
        }
        Ok(outcome(
            bt_ok && grid_ok,
            format!(
                "BT m = {}, N = {}; gridworld m = {}, smallest fraction of rollouts done within m = {min_fraction:.3}",
                cert.m, loose.steps[BT_STATE], grid.m
            ),
        ))
    };
    run().unwrap_or_else(|e| outcome(false, e.to_string()))
}

fn structural() -> Outcome {
    let mut r = rng(SEED + 8);
    let mut max_fixed_point = 0.0f64;
    for k in 0..STRUCTURAL_TRIPLES {
        let p = random_ssp(&mut r, 6, 3);
        let t = p.terminal();
        let lo: Vec<f64> = (0..p.num_states()).map(|i| if i == t { 0.0 } else { r.gen_range(-5.0..5.0) }).collect();
        let hi: Vec<f64> = lo.iter().enumerate().map(|(i, v)| if i == t { 0.0 } else { v + r.gen_range(0.0..3.0) }).collect();
        let (lo, hi) = (ValueFunction::new(lo), ValueFunction::new(hi));
        let mut run = || -> ssp_core::Result<Option<String>> {
            let (tlo, thi) = (bellman_backup(&p, &lo)?, bellman_backup(&p, &hi)?);
            if tlo.iter().zip(thi.iter()).any(|(a, b)| *a > *b) {
                return Ok(Some("monotonicity".into()));
            }
            for j in [&lo, &hi] {
                let mu = greedy_policy(&p, j)?;
                if policy_backup(&p, &mu, j)? != bellman_backup(&p, j)? {
                    return Ok(Some("greedy backup differs from T".into()));
                }
            }
            let uniform = uniform_random_policy(&p);
            let ju = evaluate_policy(&p, &uniform)?;
            let fixed = any_policy_backup(&p, &uniform, &ju)?.max_abs_diff(&ju);
            max_fixed_point = max_fixed_point.max(fixed);
            if fixed > FIXED_POINT_TOL {
                return Ok(Some(format!("evaluation fixed-point error {fixed:e}")));
            }
            let shifted = ValueFunction::new(ju.iter().enumerate().map(|(i, v)| if i == t { 0.0 } else { v + 0.5 }).collect());
            for j in [&ju, &shifted] {
                if !is_uniformly_improvable(&p, j)? || !is_uniformly_improvable(&p, &bellman_backup(&p, j)?)? {
                    return Ok(Some("improvability not closed under T".into()));
                }
            }
            let mu = greedy_policy(&p, &ju)?;
            let jm = evaluate_policy(&p, &mu)?;
            let fixed = policy_backup(&p, &mu, &jm)?.max_abs_diff(&jm);
            max_fixed_point = max_fixed_point.max(fixed);
            if fixed > FIXED_POINT_TOL {
                return Ok(Some(format!("evaluation fixed-point error {fixed:e}")));
            }
            Ok(None)
        };
        match run() {
            Ok(None) => {}
            Ok(Some(msg)) => return outcome(false, format!("triple {k}: {msg}")),
            Err(e) => return outcome(false, format!("triple {k}: {e}")),
        }
    }
    outcome(
        true,
        format!("{STRUCTURAL_TRIPLES} triples; largest evaluation fixed-point error {max_fixed_point:.1e}"),
    )
}

/// The gridworld with one slip outcome of East in state 9 landing in state 8 instead of
/// staying put.
fn slip_variant(problem: &SspProblem) -> SspProblem {
    problem.with_prob(9, EAST, 9, 0.0).with_prob(9, EAST, 8, 0.1).with_cost(9, EAST, 8, 0.04)
}

fn main() {
    let grid = build_gridworld();
    let results = [
        ("AC1", "table 2 reproduction", timed(TABLE_TIME, || table2(&grid))),
        ("AC2", "table 1 reproduction", timed(TABLE_TIME, || table1(&grid))),
        ("AC3", "discounted special case", discounted()),
        ("AC4", "greedy of improvable is proper", timed(THEOREM2_TIME, theorem2)),
        ("AC5", "sandwich and per-state bounds", timed(SOUNDNESS_TIME, soundness)),
        ("AC6", "steps bound vs simulation", timed(MC_TIME, || gridworld_steps(&grid))),
        ("AC7", "horizon certificate", certificate(&grid)),
        ("AC8", "structural checks", structural()),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("{id} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }

    let variant = slip_variant(&grid);
    variant.validate().expect("variant is a valid instance");
    let note = |o: Outcome| if o.pass { "reproduced".to_string() } else { o.detail };
    println!("NOTE state-9 slip variant, table 2: {}", note(table2(&variant)));
    println!("NOTE state-9 slip variant, table 1: {}", note(table1(&variant)));

    println!("{} of {} criteria passed", results.len() - failed, results.len());
    let strict = std::env::var("SSP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
