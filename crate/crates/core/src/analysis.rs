//! Numeric reachability and expected-cost analysis of Markov chains.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::expr::Valuation;
use crate::linalg::{CscMatrix, LinalgError, SparseLu};
use crate::model::{induce, instantiate, prob01, Mc, ModelError, Pmdp, Scheduler, Spec, SpecKind, StateId};

/// Systems up to this many unknowns use a direct sparse solve.
pub const DIRECT_LIMIT: usize = 50_000;
const GS_TOL: f64 = 1e-10;
const GS_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("expected cost diverges: state {0} reaches the goal with probability below one")]
    Divergent(StateId),
    #[error("valuation is not well defined (row error {0})")]
    NotWellDefined(f64),
    #[error("iterative solver did not converge (residual {0})")]
    NoConvergence(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecOutcome {
    pub value: f64,
    pub satisfied: bool,
}

/// Solves `x = Q x + b` on the states flagged in `unknown`; other entries keep `fixed`.
fn solve_fixpoint(mc: &Mc, unknown: &[bool], b: &[f64], fixed: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    solve_fixpoint_with(mc, unknown, b, fixed, DIRECT_LIMIT)
}

fn solve_fixpoint_with(
    mc: &Mc,
    unknown: &[bool],
    b: &[f64],
    fixed: &[f64],
    direct_limit: usize,
) -> Result<Vec<f64>, AnalysisError> {
    let n = mc.num_states();
    let idx: Vec<usize> = {
        let mut k = 0;
        (0..n)
            .map(|s| {
                let i = k;
                if unknown[s] {
                    k += 1;
                }
                i
            })
            .collect()
    };
    let states: Vec<StateId> = (0..n).filter(|&s| unknown[s]).collect();
    let m = states.len();
    let mut x = fixed.to_vec();
    if m == 0 {
        return Ok(x);
    }
    if m <= direct_limit {
        let mut trip = Vec::with_capacity(m + mc.rows.iter().map(Vec::len).sum::<usize>());
        let mut rhs = vec![0.0; m];
        for (i, &s) in states.iter().enumerate() {
            trip.push((i, i, 1.0));
            rhs[i] = b[s];
            for &(t, p) in &mc.rows[s] {
                if unknown[t] {
                    trip.push((i, idx[t], -p));
                }
            }
        }
        let a = CscMatrix::from_triplets(m, &mut trip);
        let sol = SparseLu::factor(&a, 1.0)?.solve(&rhs)?;
        for (i, &s) in states.iter().enumerate() {
            x[s] = sol[i];
        }
        return Ok(x);
    }
    for s in &states {
        x[*s] = 0.0;
    }
    let mut res = f64::INFINITY;
    for _ in 0..GS_MAX_SWEEPS {
        res = 0.0;
        for &s in &states {
            let mut acc = b[s];
            let mut diag = 0.0;
            for &(t, p) in &mc.rows[s] {
                if t == s {
                    diag += p;
                } else if unknown[t] {
                    acc += p * x[t];
                }
            }
            let new = acc / (1.0 - diag);
            res = f64::max(res, (new - x[s]).abs());
            x[s] = new;
        }
        if res < GS_TOL {
            return Ok(x);
        }
    }
    Err(AnalysisError::NoConvergence(res))
}

/// Probability of eventually reaching `targets`, per state.
pub fn reachability(mc: &Mc, targets: &BTreeSet<StateId>) -> Result<Vec<f64>, AnalysisError> {
    let n = mc.num_states();
    let pre = prob01(&mc.graph(), targets);
    let unknown: Vec<bool> = (0..n).map(|s| !pre.prob0[s] && !pre.prob1[s]).collect();
    let fixed: Vec<f64> = (0..n).map(|s| if pre.prob1[s] { 1.0 } else { 0.0 }).collect();
    let b: Vec<f64> = (0..n)
        .map(|s| if unknown[s] { mc.rows[s].iter().filter(|(t, _)| pre.prob1[*t]).map(|(_, p)| p).sum() } else { 0.0 })
        .collect();
    let x = solve_fixpoint(mc, &unknown, &b, &fixed)?;
    Ok(x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Expected accumulated state cost until `goal`.
///
/// States that reach the goal with probability below one get `+inf`; it is an
/// error if the initial state is one of them.
pub fn expected_cost(mc: &Mc, goal: &BTreeSet<StateId>) -> Result<Vec<f64>, AnalysisError> {
    let n = mc.num_states();
    let pre = prob01(&mc.graph(), goal);
    if !pre.prob1[mc.initial] {
        return Err(AnalysisError::Divergent(mc.initial));
    }
    let unknown: Vec<bool> = (0..n).map(|s| pre.prob1[s] && !goal.contains(&s)).collect();
    let fixed: Vec<f64> = (0..n).map(|s| if pre.prob1[s] { 0.0 } else { f64::INFINITY }).collect();
    let b: Vec<f64> = (0..n).map(|s| if unknown[s] { mc.costs[s] } else { 0.0 }).collect();
    let x = solve_fixpoint(mc, &unknown, &b, &fixed)?;
    Ok(x.into_iter().map(|v| v.max(0.0)).collect())
}

pub fn check(mc: &Mc, specs: &[Spec]) -> Result<Vec<SpecOutcome>, AnalysisError> {
    specs
        .iter()
        .map(|spec| {
            let value = match spec.kind {
                SpecKind::Reach => reachability(mc, &spec.target)?[mc.initial],
                SpecKind::ExpectedCost => expected_cost(mc, &spec.target)?[mc.initial],
            };
            Ok(SpecOutcome { value, satisfied: value <= spec.bound + 1e-12 })
        })
        .collect()
}

/// Instantiates, induces and checks in one go; fails on ill-defined valuations.
pub fn check_pmdp(m: &Pmdp, u: &Valuation, sched: &Scheduler, specs: &[Spec]) -> Result<Vec<SpecOutcome>, AnalysisError> {
    let mc = induced_chain(m, u, sched)?;
    check(&mc, specs)
}

pub fn induced_chain(m: &Pmdp, u: &Valuation, sched: &Scheduler) -> Result<Mc, AnalysisError> {
    let inst = instantiate(m, u)?;
    if !inst.well_defined {
        return Err(AnalysisError::NotWellDefined(inst.violation));
    }
    Ok(induce(&inst.mdp, sched)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(rows: Vec<Vec<(StateId, f64)>>, costs: Vec<f64>) -> Mc {
        Mc { initial: 0, rows, costs }
    }

    fn set(xs: &[StateId]) -> BTreeSet<StateId> {
        xs.iter().copied().collect()
    }

    #[test]
    fn gambler_ruin() {
        // fair walk on 0..=4 starting in 2 with absorbing ends
        let mut rows = vec![vec![(0, 1.0)]];
        for s in 1..4 {
            rows.push(vec![(s - 1, 0.5), (s + 1, 0.5)]);
        }
        rows.push(vec![(4, 1.0)]);
        let mut m = mc(rows, vec![1.0; 5]);
        m.initial = 2;
        let r = reachability(&m, &set(&[4])).unwrap();
        for s in 0..5 {
            assert!((r[s] - s as f64 / 4.0).abs() < 1e-12);
        }
        let c = expected_cost(&m, &set(&[0, 4])).unwrap();
        assert!((c[2] - 4.0).abs() < 1e-12);
        assert!((c[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn divergent_cost_is_reported() {
        let m = mc(vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]], vec![1.0, 0.0, 0.0]);
        assert_eq!(expected_cost(&m, &set(&[1])), Err(AnalysisError::Divergent(0)));
    }

    #[test]
    fn gauss_seidel_agrees_with_direct() {
        let n = 30;
        let mut rows = Vec::new();
        for s in 0..n {
            if s == n - 1 || s == n - 2 {
                rows.push(vec![(s, 1.0)]);
            } else {
                let next = if s == n - 3 { n - 1 } else { s + 1 };
                rows.push(vec![(s, 0.2), (next, 0.5), (n - 2, 0.3)]);
            }
        }
        let m = mc(rows, vec![1.0; n]);
        let direct = reachability(&m, &set(&[n - 1])).unwrap();
        let unknown: Vec<bool> = (0..n).map(|s| s < n - 2).collect();
        let b: Vec<f64> = (0..n).map(|s| if s == n - 3 { 0.5 } else { 0.0 }).collect();
        let mut fixed = vec![0.0; n];
        fixed[n - 1] = 1.0;
        let x = solve_fixpoint_with(&m, &unknown, &b, &fixed, 0).unwrap();
        for s in 0..n {
            assert!((x[s] - direct[s]).abs() < 1e-10, "{s}");
        }
    }
}
