use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use super::{ConstraintKind, EncodeError, LiftingMap, Relation, SchedEntry, SignomialProgram};
use crate::expr::{Exponents, Monomial, Posynomial, Signomial, Valuation, Var, VarKind, VarRegistry};
use crate::model::{instantiate, normalize_rows, normalize_scheduler, ModelError, RowScale, Scheduler};

/// Lower bound imposed on every variable.
pub const FLOOR: f64 = 1e-8;
/// Relative tightening of thresholds that absorbs solver tolerances.
pub const THRESHOLD_MARGIN: f64 = 1e-6;

/// `expr <= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpConstraint {
    pub kind: ConstraintKind,
    pub expr: Posynomial,
}

/// `expr = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpEquality {
    pub kind: ConstraintKind,
    pub expr: Monomial,
}

#[derive(Clone, Debug)]
pub struct GeometricProgram {
    pub vars: VarRegistry,
    pub objective: Posynomial,
    pub inequalities: Vec<GpConstraint>,
    pub equalities: Vec<GpEquality>,
}

type Key = Vec<(u64, Vec<(u32, u64)>)>;

fn key(s: &Signomial) -> Key {
    s.terms()
        .iter()
        .map(|t| (t.coeff.to_bits(), t.exps.iter().map(|(v, e)| (v.0, e.to_bits())).collect()))
        .collect()
}

impl GeometricProgram {
    pub fn new(vars: VarRegistry, objective: Posynomial) -> Self {
        GeometricProgram { vars, objective, inequalities: Vec::new(), equalities: Vec::new() }
    }

    /// Adds `lhs <= rhs` for a posynomial `lhs` and monomial `rhs`.
    pub fn push_le(&mut self, kind: ConstraintKind, lhs: &Signomial, rhs: &Signomial) -> Result<(), EncodeError> {
        if lhs.is_zero() {
            return Ok(());
        }
        let p = lhs.as_posynomial().ok_or_else(|| EncodeError::NotConvexifiable(format!("{kind:?}: left side")))?;
        let m = rhs.as_monomial().ok_or_else(|| EncodeError::NotConvexifiable(format!("{kind:?}: right side")))?;
        let expr = p.mul_monomial(&m.recip());
        if let Some(c) = expr.as_signomial().as_constant() {
            if c > 1.0 + 1e-12 {
                return Err(EncodeError::Infeasible(format!("{kind:?} reduces to {c} <= 1")));
            }
            return Ok(());
        }
        self.inequalities.push(GpConstraint { kind, expr });
        Ok(())
    }

    pub fn push_eq(&mut self, kind: ConstraintKind, lhs: &Monomial, rhs: &Monomial) -> Result<(), EncodeError> {
        let expr = lhs.mul(&rhs.recip());
        if expr.exps().is_one() {
            if (expr.coeff() - 1.0).abs() > 1e-12 {
                return Err(EncodeError::Infeasible(format!("{kind:?} reduces to {} = 1", expr.coeff())));
            }
            return Ok(());
        }
        self.equalities.push(GpEquality { kind, expr });
        Ok(())
    }

    pub fn used_vars(&self) -> BTreeSet<Var> {
        let mut out = self.objective.as_signomial().vars();
        for c in &self.inequalities {
            out.extend(c.expr.as_signomial().vars());
        }
        for e in &self.equalities {
            out.extend(e.expr.exps().iter().map(|(v, _)| v));
        }
        out
    }

    /// Positivity floors on every variable and unit ceilings on probabilities.
    pub fn add_bounds(&mut self) {
        self.add_bounds_with(|_| FLOOR);
    }

    /// Like [`Self::add_bounds`] with a per-variable floor.
    pub fn add_bounds_with(&mut self, floor_of: impl Fn(Var) -> f64) {
        for v in self.used_vars() {
            let floor = Monomial::new(floor_of(v), Exponents::single(v, -1.0)).expect("positive");
            self.inequalities.push(GpConstraint { kind: ConstraintKind::Floor, expr: floor.into() });
            if self.vars.kind(v) == VarKind::Probability {
                let ceil = Monomial::new(1.0, Exponents::single(v, 1.0)).expect("positive");
                self.inequalities.push(GpConstraint { kind: ConstraintKind::Ceiling, expr: ceil.into() });
            }
        }
    }

    pub fn dedup(&mut self) {
        let mut seen: HashSet<Key> = HashSet::new();
        self.inequalities.retain(|c| seen.insert(key(c.expr.as_signomial())));
        let mut seen: HashSet<Key> = HashSet::new();
        self.equalities.retain(|c| seen.insert(key(&c.expr.clone().into())));
    }

    /// Largest constraint violation at `x`, measured on the posynomial scale.
    pub fn max_violation(&self, x: &Valuation) -> Result<f64, EncodeError> {
        let mut worst: f64 = 0.0;
        for c in &self.inequalities {
            worst = worst.max(c.expr.evaluate(x)? - 1.0);
        }
        for e in &self.equalities {
            worst = worst.max((e.expr.evaluate(x)? - 1.0).abs());
        }
        Ok(worst)
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "minimize {}", self.objective.as_signomial().display(&self.vars));
        for c in &self.inequalities {
            let _ = writeln!(out, "{:?}: {} <= 1", c.kind, c.expr.as_signomial().display(&self.vars));
        }
        for e in &self.equalities {
            let s: Signomial = e.expr.clone().into();
            let _ = writeln!(out, "{:?}: {} = 1", e.kind, s.display(&self.vars));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Minimise the sum of reciprocals of parameter, lifting and scheduler variables.
    Feasibility,
    /// Minimise the program's own (posynomial) objective.
    Objective,
}

pub fn convexify(sgp: &SignomialProgram, lifting: &LiftingMap, mode: Mode) -> Result<GeometricProgram, EncodeError> {
    let objective_family = sgp.objective_family();
    if mode == Mode::Objective && objective_family.is_some() {
        return Err(EncodeError::BadObjective("reachability objectives need sequential convex programming".into()));
    }
    let mut gp = GeometricProgram::new(lifting.vars.clone(), Posynomial::from(Monomial::constant(1.0)?));
    for c in &sgp.constraints {
        if let ConstraintKind::Bellman { family, .. } = c.kind {
            if Some(family) == objective_family {
                continue;
            }
        }
        let lhs = lifting.lift(&c.lhs);
        let mut rhs = lifting.lift(&c.rhs);
        if let ConstraintKind::Threshold { .. } = c.kind {
            rhs = rhs.scale(1.0 - THRESHOLD_MARGIN);
        }
        match c.rel {
            Relation::Le => gp.push_le(c.kind.clone(), &lhs, &rhs)?,
            Relation::Eq => match (lhs.as_monomial(), rhs.as_monomial()) {
                (Some(a), Some(b)) => gp.push_eq(c.kind.clone(), &a, &b)?,
                (_, Some(_)) => gp.push_le(c.kind.clone(), &lhs, &rhs)?,
                (Some(_), _) => gp.push_le(c.kind.clone(), &rhs, &lhs)?,
                _ => return Err(EncodeError::NotConvexifiable(format!("{:?}", c.kind))),
            },
        }
    }
    add_region_lift_bounds(sgp, lifting, &mut gp)?;

    let reciprocal = |v: Var| Signomial::monomial(1.0, Exponents::single(v, -1.0));
    let objective = match mode {
        Mode::Feasibility => {
            let used = gp.used_vars();
            let mut f = Signomial::zero();
            for v in used {
                if matches!(gp.vars.kind(v), VarKind::Parameter | VarKind::Lifting | VarKind::Scheduler) {
                    f = &f + &reciprocal(v);
                }
            }
            if f.is_zero() {
                Signomial::constant(1.0)
            } else {
                f
            }
        }
        Mode::Objective => {
            let obj = sgp.objective.as_ref().ok_or_else(|| EncodeError::BadObjective("no objective".into()))?;
            let mut f = lifting.lift_expr(obj);
            for l in &lifting.lifts {
                f = &f + &reciprocal(l.var).scale(sgp.regularization);
            }
            f
        }
    };
    gp.objective = objective.as_posynomial().ok_or_else(|| EncodeError::NotConvexifiable("objective".into()))?;
    gp.add_bounds();
    gp.dedup();
    Ok(gp)
}

/// Lower bounds on lifting variables implied by parameter boxes.
pub fn add_region_lift_bounds(
    sgp: &SignomialProgram,
    lifting: &LiftingMap,
    gp: &mut GeometricProgram,
) -> Result<(), EncodeError> {
    if sgp.boxes.is_empty() {
        return Ok(());
    }
    for l in &lifting.lifts {
        let mut max = 0.0;
        let mut bounded = true;
        for t in l.complement.terms() {
            let mut val = t.coeff;
            for (v, e) in t.exps.iter() {
                match sgp.boxes.iter().find(|b| b.0 == v) {
                    Some(&(_, lo, hi)) => val *= if e > 0.0 { hi.powf(e) } else { lo.powf(e) },
                    None => bounded = false,
                }
            }
            max += val;
        }
        if bounded && max < 1.0 {
            gp.push_le(ConstraintKind::RegionLift, &Signomial::constant(1.0 - max), &Signomial::var(l.var))?;
        }
    }
    Ok(())
}

/// Maps a GP solution back to a well-defined valuation and scheduler.
pub fn extract_solution(
    sgp: &SignomialProgram,
    lifting: &LiftingMap,
    x: &Valuation,
) -> Result<(Valuation, Scheduler), EncodeError> {
    let mut raw = Valuation::new();
    for v in sgp.params.iter().copied().chain(lifting.lifts.iter().map(|l| l.var)) {
        if let Some(val) = x.get(v) {
            raw.insert(v, val)?;
        }
    }
    // A lifted pair (p, p_bar) is closed by p <- p / (p + p_bar). Other lifted
    // rows are closed by re-evaluating the lifted entry exactly; purely
    // posynomial rows are rescaled.
    for l in &lifting.lifts {
        if let Some(p) = pair_var(sgp, &l.complement) {
            if let (Some(a), Some(b)) = (x.get(p), x.get(l.var)) {
                raw.insert(p, a / (a + b))?;
            }
        }
    }
    let mut rows = Vec::new();
    for (s, cs) in sgp.model.choices.iter().enumerate() {
        for c in cs.iter().filter(|c| !c.is_constant()) {
            if c.transitions.iter().any(|(_, e)| lifting.find(e).is_some()) {
                continue;
            }
            rows.push(RowScale {
                state: s,
                action: c.action.clone(),
                entries: c.transitions.iter().map(|(_, e)| e.clone()).collect(),
            });
        }
    }
    let scaled = normalize_rows(&rows, &raw)?;
    let mut u = Valuation::new();
    for &v in &sgp.params {
        let val = scaled.get(v).ok_or(EncodeError::Model(ModelError::NotWellDefined(format!(
            "no value for parameter `{}`",
            sgp.vars.name(v)
        ))))?;
        u.insert(v, val)?;
    }
    let mut weights = Vec::with_capacity(sgp.sched.len());
    for row in &sgp.sched {
        let mut w = Vec::with_capacity(row.len());
        for e in row {
            w.push(match e {
                SchedEntry::Fixed(f) => *f,
                SchedEntry::Var(v) => x.get(*v).unwrap_or(0.0),
            });
        }
        weights.push(w);
    }
    let sched = normalize_scheduler(&weights)?;
    let inst = instantiate(&sgp.model, &u)?;
    if !inst.well_defined {
        return Err(ModelError::NotWellDefined(format!("rows deviate by {}", inst.violation)).into());
    }
    Ok((u, sched))
}

/// The parameter `p` when `complement` is exactly `p`.
fn pair_var(sgp: &SignomialProgram, complement: &Signomial) -> Option<Var> {
    match complement.terms() {
        [t] if t.coeff == 1.0 && t.exps.len() == 1 => {
            let (v, e) = t.exps.iter().next()?;
            (e == 1.0 && sgp.params.contains(&v)).then_some(v)
        }
        _ => None,
    }
}
