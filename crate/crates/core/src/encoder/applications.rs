use std::collections::BTreeSet;

use super::{encode_sgp, Constraint, ConstraintKind, EncodeError, Factored, Objective, Relation, SignomialProgram};
use crate::expr::{Shape, Signomial, Valuation, Var, VarKind, VarRegistry};
use crate::model::{Pmdp, PmdpBuilder, Spec, StateId};

/// Weight of the reciprocal regulariser added to the squared repair objective.
pub const REPAIR_REGULARIZATION: f64 = 1e-3;

/// Parameter region: boxes and linear constraints `sum c_i x_i <= d` with `c_i, d > 0`.
#[derive(Clone, Debug, Default)]
pub struct Region {
    pub boxes: Vec<(Var, f64, f64)>,
    pub linear: Vec<(Signomial, f64)>,
}

pub fn add_region(sgp: &mut SignomialProgram, region: &Region) -> Result<(), EncodeError> {
    let nparams = sgp.model.vars.len();
    for &(v, lo, hi) in &region.boxes {
        if v.index() >= nparams {
            return Err(EncodeError::BadRegion(format!("{v} is not a parameter")));
        }
        let name = sgp.vars.name(v).to_string();
        if !(lo > 0.0 && hi > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(EncodeError::BadRegion(format!("bounds [{lo}, {hi}] for `{name}`")));
        }
        let x = Factored::var(v);
        if lo == hi {
            sgp.constraints.push(Constraint {
                kind: ConstraintKind::Region,
                lhs: x,
                rel: Relation::Eq,
                rhs: Factored::constant(lo),
            });
        } else {
            sgp.constraints.push(Constraint {
                kind: ConstraintKind::Region,
                lhs: x.clone(),
                rel: Relation::Le,
                rhs: Factored::constant(hi),
            });
            if lo > 0.0 {
                sgp.constraints.push(Constraint {
                    kind: ConstraintKind::Region,
                    lhs: Factored::constant(lo),
                    rel: Relation::Le,
                    rhs: x,
                });
            }
        }
        sgp.boxes.push((v, lo, hi));
    }
    for (expr, d) in &region.linear {
        let linear = expr.classify() != Shape::Signomial
            && expr.terms().iter().all(|t| t.exps.len() == 1 && t.exps.iter().all(|(v, e)| e == 1.0 && v.index() < nparams));
        if !linear {
            return Err(EncodeError::BadRegion(format!(
                "`{}` is not a positive linear combination of parameters",
                expr.display(&sgp.vars)
            )));
        }
        if !(*d > 0.0) {
            return Err(EncodeError::BadRegion(format!("right-hand side {d} must be positive")));
        }
        sgp.constraints.push(Constraint {
            kind: ConstraintKind::Region,
            lhs: Factored::expr(expr.clone()),
            rel: Relation::Le,
            rhs: Factored::constant(*d),
        });
    }
    Ok(())
}

/// Transition probabilities that a repair may rescale.
#[derive(Clone, Debug)]
pub struct Repair {
    /// Parameter, source state, choice index, successor and original probability.
    pub entries: Vec<(Var, StateId, usize, StateId, f64)>,
}

impl Repair {
    pub fn identity(&self) -> Valuation {
        self.entries.iter().map(|e| (e.0, 1.0)).collect()
    }

    /// Squared change of the repaired probabilities.
    pub fn cost(&self, u: &Valuation) -> f64 {
        self.entries.iter().map(|&(v, .., a)| (a * u.get(v).unwrap_or(1.0) - a).powi(2)).sum()
    }

    pub fn squares(&self) -> Signomial {
        self.entries.iter().fold(Signomial::zero(), |acc, e| &acc + &Signomial::var(e.0).pow_int(2))
    }
}

/// Parametrises each changeable transition `a` as `p * a` and minimises the sum of squares of `p`.
pub fn encode_repair(
    m: &Pmdp,
    specs: &[Spec],
    changeable: &[(StateId, String, StateId)],
) -> Result<(Pmdp, SignomialProgram, Repair), EncodeError> {
    if m.choices.iter().flatten().any(|c| !c.is_constant()) {
        return Err(EncodeError::BadRepair("model must be parameter-free".into()));
    }
    if changeable.is_empty() {
        return Err(EncodeError::BadRepair("no changeable transitions".into()));
    }
    let mut vars = VarRegistry::new();
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (s, action, t) in changeable {
        let i = m
            .choice_index(*s, action)
            .ok_or_else(|| EncodeError::BadRepair(format!("state {s} has no action `{action}`")))?;
        let a = m.choices[*s][i]
            .transitions
            .iter()
            .find(|(u, _)| u == t)
            .and_then(|(_, e)| e.as_constant())
            .filter(|&a| a > 0.0)
            .ok_or_else(|| EncodeError::BadRepair(format!("no positive transition {s} --{action}--> {t}")))?;
        if !seen.insert((*s, i, *t)) {
            return Err(EncodeError::BadRepair(format!("transition {s} --{action}--> {t} listed twice")));
        }
        let v = vars.declare_fresh(&format!("r_s{s}_{action}_s{t}"), VarKind::Parameter);
        entries.push((v, *s, i, *t, a));
    }
    let mut b = PmdpBuilder::new(m.num_states(), m.initial, vars);
    for (s, cs) in m.choices.iter().enumerate() {
        b.name_state(s, &m.state_names[s])?;
        for (i, c) in cs.iter().enumerate() {
            for (t, e) in &c.transitions {
                let expr = match entries.iter().find(|x| x.1 == s && x.2 == i && x.3 == *t) {
                    Some(&(v, .., a)) => Signomial::var(v).scale(a),
                    None => e.clone(),
                };
                b.transition(s, &c.action, *t, expr)?;
            }
            b.cost(s, &c.action, c.cost)?;
        }
    }
    for (name, states) in &m.labels {
        for &s in states {
            b.label(name, s)?;
        }
    }
    let repaired = b.build()?;
    let repair = Repair { entries };
    let sgp = encode_sgp(
        &repaired,
        specs,
        Objective::Expression { expr: repair.squares(), regularization: REPAIR_REGULARIZATION },
    )?;
    Ok((repaired, sgp, repair))
}

/// Restricts the sum of squared repair parameters to at most `bound`.
pub fn add_cost_bound(sgp: &mut SignomialProgram, repair: &Repair, bound: f64) -> Result<(), EncodeError> {
    if !(bound > 0.0) {
        return Err(EncodeError::Infeasible(format!("cost bound {bound} is not positive")));
    }
    sgp.constraints.push(Constraint {
        kind: ConstraintKind::CostBound,
        lhs: Factored::expr(repair.squares()),
        rel: Relation::Le,
        rhs: Factored::constant(bound),
    });
    Ok(())
}
