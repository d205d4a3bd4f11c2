//! Geometric programs in log space and a primal-dual interior-point solver.

mod ipm;

pub use ipm::{solve, Options, SolveResult, Status};

use crate::encoder::{ConstraintKind, GeometricProgram};
use crate::expr::{Monomial, Posynomial, Valuation, Var};

/// `a . y + b` over log-variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub a: Vec<(usize, f64)>,
    pub b: f64,
}

impl Affine {
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.a.iter().fold(self.b, |acc, &(i, c)| acc + c * y[i])
    }
}

/// `log sum_k exp(a_k . y + b_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogSumExp {
    pub terms: Vec<Affine>,
}

impl LogSumExp {
    pub fn is_affine(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let z: Vec<f64> = self.terms.iter().map(|t| t.eval(y)).collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    /// Value and softmax weights of the terms.
    pub(crate) fn eval_weights(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let mut w: Vec<f64> = self.terms.iter().map(|t| t.eval(y)).collect();
        let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in &mut w {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in &mut w {
            *v /= sum;
        }
        (m + sum.ln(), w)
    }

    fn from_posynomial(p: &Posynomial, index: &dyn Fn(Var) -> usize) -> Self {
        LogSumExp { terms: p.monomials().map(|m| affine(&m, index)).collect() }
    }
}

fn affine(m: &Monomial, index: &dyn Fn(Var) -> usize) -> Affine {
    Affine { a: m.exps().iter().map(|(v, e)| (index(v), e)).collect(), b: m.coeff().ln() }
}

/// A geometric program after the substitution `x = exp(y)`.
#[derive(Clone, Debug)]
pub struct ConvexForm {
    /// GP variable of each log-variable.
    pub vars: Vec<Var>,
    pub objective: LogSumExp,
    /// `f_i(y) <= 0`.
    pub inequalities: Vec<LogSumExp>,
    pub kinds: Vec<ConstraintKind>,
    /// `a . y + b = 0`.
    pub equalities: Vec<Affine>,
    /// Set when a constraint reduces to a false constant inequality.
    pub trivially_infeasible: Option<ConstraintKind>,
}

impl ConvexForm {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn valuation(&self, y: &[f64]) -> Valuation {
        self.vars.iter().zip(y).map(|(&v, &yi)| (v, yi.exp())).collect()
    }

    pub fn log_point(&self, x: &Valuation) -> Vec<f64> {
        self.vars.iter().map(|&v| x.get(v).map_or(0.0, f64::ln)).collect()
    }
}

pub fn to_convex(gp: &GeometricProgram) -> ConvexForm {
    let vars: Vec<Var> = gp.used_vars().into_iter().collect();
    let index = |v: Var| vars.binary_search(&v).expect("used variable");
    let mut inequalities = Vec::new();
    let mut kinds = Vec::new();
    let mut trivially_infeasible = None;
    for c in &gp.inequalities {
        let (constant, rest): (Vec<Monomial>, Vec<Monomial>) = c.expr.monomials().partition(|m| m.exps().is_one());
        let c0: f64 = constant.iter().map(|m| m.coeff()).sum();
        if rest.is_empty() {
            if c0 > 1.0 {
                trivially_infeasible.get_or_insert(c.kind.clone());
            }
            continue;
        }
        if c0 >= 1.0 {
            trivially_infeasible.get_or_insert(c.kind.clone());
            continue;
        }
        let scale = (1.0 - c0).ln();
        let mut f = LogSumExp { terms: rest.iter().map(|m| affine(m, &index)).collect() };
        for t in &mut f.terms {
            t.b -= scale;
        }
        inequalities.push(f);
        kinds.push(c.kind.clone());
    }
    let equalities = gp.equalities.iter().map(|e| affine(&e.expr, &index)).collect();
    ConvexForm {
        objective: LogSumExp::from_posynomial(&gp.objective, &index),
        vars,
        inequalities,
        kinds,
        equalities,
        trivially_infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Exponents, VarKind, VarRegistry};

    fn reg() -> (VarRegistry, Var, Var, Var) {
        let mut r = VarRegistry::new();
        let x = r.declare("x", VarKind::Parameter).unwrap();
        let y = r.declare("y", VarKind::Parameter).unwrap();
        let z = r.declare("z", VarKind::Parameter).unwrap();
        (r, x, y, z)
    }

    #[test]
    fn monomial_equality_becomes_affine() {
        let (r, x, y, _) = reg();
        let mut gp = GeometricProgram::new(r, Monomial::new(1.0, Exponents::single(x, 1.0)).unwrap().into());
        let m = Monomial::new(2.0, Exponents::from_pairs([(x, 1.0), (y, -1.0)])).unwrap();
        gp.push_eq(ConstraintKind::Region, &m, &Monomial::constant(1.0).unwrap()).unwrap();
        let cf = to_convex(&gp);
        assert_eq!(cf.equalities.len(), 1);
        let e = &cf.equalities[0];
        assert_eq!(e.a, vec![(0, 1.0), (1, -1.0)]);
        assert!((e.b - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constants_are_folded() {
        let (r, x, _, z) = reg();
        let mut gp = GeometricProgram::new(r.clone(), Monomial::new(1.0, Exponents::single(x, 1.0)).unwrap().into());
        let lhs = &(&crate::expr::Signomial::var(x) + &crate::expr::Signomial::var(z)) + &crate::expr::Signomial::constant(0.5);
        gp.push_le(ConstraintKind::Region, &lhs, &crate::expr::Signomial::constant(1.0)).unwrap();
        let cf = to_convex(&gp);
        let f = &cf.inequalities[0];
        assert_eq!(f.terms.len(), 2);
        // x + z <= 0.5 becomes log(exp(y_x) + exp(y_z)) - log 0.5 <= 0
        assert!(f.eval(&[0.25f64.ln(), 0.25f64.ln()]).abs() < 1e-12);

        let mut bad = GeometricProgram::new(r, Monomial::new(1.0, Exponents::single(x, 1.0)).unwrap().into());
        let lhs = &crate::expr::Signomial::var(x) + &crate::expr::Signomial::constant(1.0);
        bad.push_le(ConstraintKind::Region, &lhs, &crate::expr::Signomial::constant(1.0)).unwrap();
        assert_eq!(to_convex(&bad).trivially_infeasible, Some(ConstraintKind::Region));
    }

    #[test]
    fn single_term_is_affine() {
        let (r, x, _, _) = reg();
        let mut gp = GeometricProgram::new(r, Monomial::new(1.0, Exponents::single(x, 1.0)).unwrap().into());
        gp.push_le(ConstraintKind::Region, &crate::expr::Signomial::var(x), &crate::expr::Signomial::constant(2.0)).unwrap();
        let cf = to_convex(&gp);
        assert!(cf.inequalities[0].is_affine());
        assert!((cf.inequalities[0].eval(&[2f64.ln()])).abs() < 1e-15);
    }
}
