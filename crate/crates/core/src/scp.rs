//! Sequential convex programming: repeated local geometric programs built
//! from monomial approximations inside a multiplicative trust region.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{check, expected_cost, induced_chain, reachability, AnalysisError, SpecOutcome};
use crate::encoder::{
    add_region_lift_bounds, extract_solution, ConstraintKind, EncodeError, GeometricProgram, LiftingMap, Relation,
    Role, SchedEntry, SignomialProgram, Value, FLOOR, THRESHOLD_MARGIN,
};
use crate::expr::{Exponents, ExprError, Monomial, Posynomial, Signomial, Valuation, Var, VarKind};
use crate::gp::{self, to_convex, Status};
use crate::model::{Scheduler, SpecKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScpError {
    #[error("starting point violates a property bound")]
    InfeasibleStart,
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Best local monomial approximation of `p` at `x`: exact in value and gradient at `x`.
pub fn monomial_approx(p: &Posynomial, x: &Valuation) -> Result<Monomial, ExprError> {
    let s = p.as_signomial();
    let f = s.evaluate(x)?;
    let mut exps = Vec::new();
    for v in s.vars() {
        let xv = x.get(v).ok_or(ExprError::Unbound(v))?;
        let a = xv * s.partial_derivative(v).evaluate(x)? / f;
        if a != 0.0 {
            exps.push((v, a));
        }
    }
    let mut c = f;
    for &(v, a) in &exps {
        c /= x.get(v).expect("bound above").powf(a);
    }
    Monomial::new(c, Exponents::from_pairs(exps))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    /// Minimise the program objective while keeping every specification.
    Objective,
    /// Minimise the worst ratio of specification value to threshold.
    Restore,
}

#[derive(Clone, Debug)]
pub struct ScpOptions {
    pub eps: f64,
    pub t0: f64,
    pub t_expand: f64,
    pub t_max: f64,
    /// Bound on local GP solves.
    pub max_iters: usize,
    pub gp: gp::Options,
    /// No new local program is started after this instant.
    pub deadline: Option<Instant>,
}

impl Default for ScpOptions {
    fn default() -> Self {
        ScpOptions { eps: 1e-3, t0: 1.5, t_expand: 1.25, t_max: 4.0, max_iters: 50, gp: gp::Options::default(), deadline: None }
    }
}

/// Smallest trust-region factor before the run gives up.
pub const T_MIN: f64 = 1.0001;
/// Floor of a property value relative to its value at the expansion point.
const VALUE_FLOOR_RATIO: f64 = 1e-6;
/// Smallest property value used as an expansion point.
const TINY: f64 = 1e-200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScpStatus {
    Converged,
    MaxIterations,
    TrustRegionCollapsed,
    Timeout,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub k: usize,
    /// Exact objective of the candidate (infinite when it could not be evaluated).
    pub objective: f64,
    pub t: f64,
    pub accepted: bool,
    pub solver_iterations: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct ScpState {
    pub u: Valuation,
    pub sched: Scheduler,
    pub objective: f64,
    pub outcomes: Vec<SpecOutcome>,
    /// Accepted steps.
    pub iterations: usize,
    /// Exact objective of the start followed by every accepted iterate.
    pub history: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub status: ScpStatus,
}

pub fn write_trace(trace: &[TraceRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "k,objective,t,accepted,solver_iterations,wall_time")?;
    for r in trace {
        writeln!(w, "{},{},{},{},{},{}", r.k, r.objective, r.t, r.accepted, r.solver_iterations, r.wall_time)?;
    }
    Ok(())
}

/// Full point for the local program: parameters and scheduler from the
/// iterate, lifted and property variables evaluated exactly.
pub fn expansion_point(
    sgp: &SignomialProgram,
    lifting: &LiftingMap,
    u: &Valuation,
    sched: &Scheduler,
) -> Result<Valuation, ScpError> {
    let mut x = Valuation::new();
    for &v in &sgp.params {
        x.insert(v, u.get(v).ok_or(ExprError::Unbound(v))?.max(FLOOR))?;
    }
    for l in &lifting.lifts {
        x.insert(l.var, l.expr.evaluate(u)?.max(FLOOR))?;
    }
    for (row, w) in sgp.sched.iter().zip(&sched.weights) {
        for (e, &wi) in row.iter().zip(w) {
            if let SchedEntry::Var(v) = e {
                x.insert(*v, wi.max(FLOOR))?;
            }
        }
    }
    let mc = induced_chain(&sgp.model, u, sched)?;
    for fam in &sgp.families {
        if !fam.values.iter().any(|v| matches!(v, Some(Value::Var(_)))) {
            continue;
        }
        let vals = match fam.kind {
            SpecKind::Reach => reachability(&mc, &fam.target)?,
            SpecKind::ExpectedCost => expected_cost(&mc, &fam.target)?,
        };
        for (s, v) in fam.values.iter().enumerate() {
            if let Some(Value::Var(v)) = v {
                let val = vals[s];
                if !val.is_finite() {
                    return Err(AnalysisError::Divergent(s).into());
                }
                x.insert(*v, val.max(TINY))?;
            }
        }
    }
    Ok(x)
}

/// Exact objective and specification outcomes of a well-defined iterate.
pub fn exact_objective(
    sgp: &SignomialProgram,
    goal: Goal,
    u: &Valuation,
    sched: &Scheduler,
) -> Result<(f64, Vec<SpecOutcome>), ScpError> {
    let mc = induced_chain(&sgp.model, u, sched)?;
    let outcomes = check(&mc, &sgp.specs)?;
    let f = match goal {
        Goal::Restore => sgp
            .specs
            .iter()
            .zip(&outcomes)
            .map(|(s, o)| o.value / s.bound)
            .fold(0.0, f64::max),
        Goal::Objective => match sgp.objective_family() {
            Some(f) => 1.0 / reachability(&mc, &sgp.families[f].target)?[mc.initial],
            None => {
                let obj = sgp.objective.as_ref().ok_or_else(|| EncodeError::BadObjective("no objective".into()))?;
                let base = obj - &sgp.regularizer().scale(sgp.regularization);
                base.evaluate(u)?
            }
        },
    };
    Ok((f, outcomes))
}

fn reciprocal(v: Var) -> Signomial {
    Signomial::monomial(1.0, Exponents::single(v, -1.0))
}

/// Local geometric program around `center` with trust region factor `t`.
///
/// Stochasticity and simplex rows become monomial equalities, which only
/// allow rows summing to at least one; threshold properties keep their
/// posynomial upper bounds, and the objective property is bounded from
/// above by the monomial approximation of its right-hand side.
pub fn build_local_gp(
    sgp: &SignomialProgram,
    lifting: &LiftingMap,
    center: &Valuation,
    t: f64,
    goal: Goal,
    margin_ok: &[bool],
) -> Result<GeometricProgram, ScpError> {
    let mut vars = lifting.vars.clone();
    let tau = match goal {
        Goal::Restore => Some(vars.declare_fresh("tau", VarKind::Parameter)),
        Goal::Objective => None,
    };
    let objective_family = sgp.objective_family();
    let mut gp = GeometricProgram::new(vars, Posynomial::from(Monomial::constant(1.0)?));
    for c in &sgp.constraints {
        let lhs = lifting.lift(&c.lhs);
        let rhs = lifting.lift(&c.rhs);
        match &c.kind {
            ConstraintKind::Bellman { family, .. } if Some(*family) == objective_family => {
                if goal == Goal::Restore {
                    continue;
                }
                let p = rhs.as_posynomial().ok_or_else(|| EncodeError::NotConvexifiable(format!("{:?}", c.kind)))?;
                let approx: Signomial = monomial_approx(&p, center)?.into();
                gp.push_le(c.kind.clone(), &lhs, &approx)?;
            }
            ConstraintKind::RowStochastic { .. } | ConstraintKind::SchedulerSimplex { .. } => {
                let p = lhs.as_posynomial().ok_or_else(|| EncodeError::NotConvexifiable(format!("{:?}", c.kind)))?;
                let m = rhs.as_monomial().ok_or_else(|| EncodeError::NotConvexifiable(format!("{:?}", c.kind)))?;
                gp.push_eq(c.kind.clone(), &monomial_approx(&p, center)?, &m)?;
            }
            ConstraintKind::Threshold { family } => {
                let Role::Threshold(i) = sgp.families[*family].role else { continue };
                let mut bound = rhs.clone();
                if margin_ok.get(i).copied().unwrap_or(false) {
                    bound = bound.scale(1.0 - THRESHOLD_MARGIN);
                }
                if let Some(tau) = tau {
                    bound = &bound * &Signomial::var(tau);
                }
                gp.push_le(c.kind.clone(), &lhs, &bound)?;
            }
            _ => match c.rel {
                Relation::Le => gp.push_le(c.kind.clone(), &lhs, &rhs)?,
                Relation::Eq => match (lhs.as_monomial(), rhs.as_monomial()) {
                    (Some(a), Some(b)) => gp.push_eq(c.kind.clone(), &a, &b)?,
                    (_, Some(_)) => gp.push_le(c.kind.clone(), &lhs, &rhs)?,
                    (Some(_), _) => gp.push_le(c.kind.clone(), &rhs, &lhs)?,
                    _ => return Err(EncodeError::NotConvexifiable(format!("{:?}", c.kind)).into()),
                },
            },
        }
    }
    add_region_lift_bounds(sgp, lifting, &mut gp)?;
    for v in sgp.params.iter().copied().chain(sgp.sched_vars()) {
        let Some(c) = center.get(v) else { continue };
        let x = Signomial::var(v);
        gp.push_le(ConstraintKind::TrustRegion, &x, &Signomial::constant(t * c))?;
        gp.push_le(ConstraintKind::TrustRegion, &Signomial::constant(c / t), &x)?;
    }
    let objective = match (goal, tau) {
        (Goal::Restore, Some(tau)) => Signomial::var(tau),
        _ => {
            let obj = sgp.objective.as_ref().ok_or_else(|| EncodeError::BadObjective("no objective".into()))?;
            let mut f = lifting.lift_expr(obj);
            for l in &lifting.lifts {
                f = &f + &reciprocal(l.var).scale(sgp.regularization);
            }
            f
        }
    };
    gp.objective = objective.as_posynomial().ok_or_else(|| EncodeError::NotConvexifiable("objective".into()))?;
    // A fixed floor on property values would cap parameters through chains
    // of small factors, so those floors follow the expansion point instead.
    let values: BTreeSet<Var> = sgp
        .families
        .iter()
        .flat_map(|f| f.values.iter().filter_map(|v| if let Some(Value::Var(v)) = v { Some(*v) } else { None }))
        .collect();
    gp.add_bounds_with(|v| match center.get(v) {
        Some(c) if values.contains(&v) => (c * VALUE_FLOOR_RATIO).min(FLOOR),
        _ => FLOOR,
    });
    gp.dedup();
    Ok(gp)
}

/// Runs sequential convex programming from a well-defined start.
///
/// With [`Goal::Objective`] the start must satisfy every specification and
/// so does every accepted iterate. With [`Goal::Restore`] the run stops as
/// soon as an iterate satisfies them.
pub fn run(
    sgp: &SignomialProgram,
    lifting: &LiftingMap,
    u0: &Valuation,
    sched0: &Scheduler,
    goal: Goal,
    opts: &ScpOptions,
) -> Result<ScpState, ScpError> {
    let (f0, outcomes) = exact_objective(sgp, goal, u0, sched0)?;
    let all_ok = |o: &[SpecOutcome]| o.iter().all(|o| o.satisfied);
    if goal == Goal::Objective && !all_ok(&outcomes) {
        return Err(ScpError::InfeasibleStart);
    }
    let mut state = ScpState {
        u: u0.clone(),
        sched: sched0.clone(),
        objective: f0,
        outcomes,
        iterations: 0,
        history: vec![f0],
        trace: Vec::new(),
        status: ScpStatus::MaxIterations,
    };
    if goal == Goal::Restore && all_ok(&state.outcomes) {
        state.status = ScpStatus::Converged;
        return Ok(state);
    }
    let mut t = opts.t0;
    for k in 0..opts.max_iters {
        let clock = Instant::now();
        if opts.deadline.is_some_and(|d| clock >= d) {
            state.status = ScpStatus::Timeout;
            return Ok(state);
        }
        let margin_ok: Vec<bool> = sgp
            .specs
            .iter()
            .zip(&state.outcomes)
            .map(|(s, o)| o.value <= s.bound * (1.0 - THRESHOLD_MARGIN))
            .collect();
        let center = expansion_point(sgp, lifting, &state.u, &state.sched)?;
        let local = build_local_gp(sgp, lifting, &center, t, goal, &margin_ok)?;
        let cf = to_convex(&local);
        let start = cf.log_point(&center);
        let res = gp::solve(&cf, &opts.gp, Some(&start));
        let candidate = if res.status == Status::Optimal {
            extract_solution(sgp, lifting, &res.x)
                .ok()
                .and_then(|(u, s)| exact_objective(sgp, goal, &u, &s).ok().map(|(f, o)| (u, s, f, o)))
        } else {
            None
        };
        let f_new = candidate.as_ref().map_or(f64::INFINITY, |c| c.2);
        let accepted = match &candidate {
            Some((.., f, o)) => f.is_finite() && *f < state.objective && (goal == Goal::Restore || all_ok(o)),
            None => false,
        };
        state.trace.push(TraceRow {
            k,
            objective: f_new,
            t,
            accepted,
            solver_iterations: res.iterations,
            wall_time: clock.elapsed().as_secs_f64(),
        });
        if accepted {
            let (u, s, f, o) = candidate.expect("accepted candidate");
            let delta = state.objective - f;
            let ratio = delta / state.objective.abs().max(f64::MIN_POSITIVE);
            state.u = u;
            state.sched = s;
            state.objective = f;
            state.outcomes = o;
            state.iterations += 1;
            state.history.push(f);
            if goal == Goal::Restore && all_ok(&state.outcomes) {
                state.status = ScpStatus::Converged;
                return Ok(state);
            }
            if goal == Goal::Objective && delta < opts.eps {
                state.status = ScpStatus::Converged;
                return Ok(state);
            }
            t = if ratio >= 0.01 { (t * opts.t_expand).min(opts.t_max) } else { shrink(t) };
        } else {
            if t <= T_MIN {
                state.status = ScpStatus::TrustRegionCollapsed;
                return Ok(state);
            }
            t = shrink(t);
        }
    }
    Ok(state)
}

fn shrink(t: f64) -> f64 {
    (1.0 + (t - 1.0) / 2.0).max(T_MIN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_signomial, VarRegistry};

    #[test]
    fn approximation_matches_at_center() {
        let mut r = VarRegistry::new();
        let x = r.declare("x", VarKind::Parameter).unwrap();
        let y = r.declare("y", VarKind::Parameter).unwrap();
        let p = parse_signomial("2*x^2*y + 3*x^-1 + y^0.5", |n| r.get(n)).unwrap().as_posynomial().unwrap();
        let u: Valuation = [(x, 0.7), (y, 1.9)].into_iter().collect();
        let m = monomial_approx(&p, &u).unwrap();
        assert!((m.evaluate(&u).unwrap() - p.evaluate(&u).unwrap()).abs() < 1e-12);
        // the approximation never exceeds the posynomial
        let w: Valuation = [(x, 1.3), (y, 0.4)].into_iter().collect();
        assert!(m.evaluate(&w).unwrap() <= p.evaluate(&w).unwrap());
    }

    #[test]
    fn shrink_reaches_floor() {
        let mut t = 1.5;
        for _ in 0..40 {
            t = shrink(t);
        }
        assert_eq!(t, T_MIN);
    }
}
