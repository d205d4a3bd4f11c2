use super::{EncodeError, Factored, SignomialProgram};
use crate::expr::{Shape, Signomial, Var, VarKind, VarRegistry};

/// A fresh variable standing for a transition expression `1 - complement`.
#[derive(Clone, Debug)]
pub struct Lift {
    pub var: Var,
    pub expr: Signomial,
    pub complement: Signomial,
}

/// Lifting variables for all non-posynomial transition expressions of a program.
#[derive(Clone, Debug)]
pub struct LiftingMap {
    /// Program variables followed by the lifting variables.
    pub vars: VarRegistry,
    pub lifts: Vec<Lift>,
}

impl LiftingMap {
    /// Each row may contain at most one non-posynomial successor, which must
    /// equal one minus the sum of the others.
    pub fn build(sgp: &SignomialProgram) -> Result<LiftingMap, EncodeError> {
        let mut vars = sgp.vars.clone();
        let mut lifts: Vec<Lift> = Vec::new();
        for (s, cs) in sgp.model.choices.iter().enumerate() {
            for c in cs {
                let shape_err = || EncodeError::Shape { state: s, action: c.action.clone() };
                let odd: Vec<usize> = (0..c.transitions.len())
                    .filter(|&k| {
                        let e = &c.transitions[k].1;
                        !e.is_zero() && e.classify() == Shape::Signomial
                    })
                    .collect();
                let k = match odd.as_slice() {
                    [] => continue,
                    [k] => *k,
                    _ => return Err(shape_err()),
                };
                let expr = &c.transitions[k].1;
                let complement = c
                    .transitions
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .fold(Signomial::zero(), |acc, (_, (_, e))| &acc + e);
                match (expr + &complement).as_constant() {
                    Some(x) if (x - 1.0).abs() <= 1e-12 => {}
                    _ => return Err(shape_err()),
                }
                if lifts.iter().any(|l| &l.expr == expr) {
                    continue;
                }
                let name = match (expr.terms(), complement.as_posynomial()) {
                    ([one, t], _) if one.exps.is_one() && t.coeff == -1.0 && t.exps.len() == 1 => {
                        let (v, e) = t.exps.iter().next().expect("one factor");
                        if e == 1.0 {
                            format!("{}_bar", sgp.vars.name(v))
                        } else {
                            format!("lift{}", lifts.len())
                        }
                    }
                    (_, None) => return Err(shape_err()),
                    _ => format!("lift{}", lifts.len()),
                };
                let var = vars.declare_fresh(&name, VarKind::Lifting);
                lifts.push(Lift { var, expr: expr.clone(), complement });
            }
        }
        Ok(LiftingMap { vars, lifts })
    }

    pub fn find(&self, e: &Signomial) -> Option<&Lift> {
        self.lifts.iter().find(|l| &l.expr == e)
    }

    pub fn lift_expr(&self, e: &Signomial) -> Signomial {
        match self.find(e) {
            Some(l) => Signomial::var(l.var),
            None => e.clone(),
        }
    }

    pub fn lift(&self, f: &Factored) -> Signomial {
        f.map_factors(|x| self.lift_expr(x))
    }
}
