use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::{ExprError, Valuation, Var, VarRegistry, ZERO_COEFF};

/// Sparse exponent vector, sorted by variable, without zero entries.
#[derive(Clone, Debug, Default)]
pub struct Exponents(Vec<(Var, f64)>);

impl Exponents {
    pub fn one() -> Self {
        Exponents(Vec::new())
    }

    pub fn single(v: Var, e: f64) -> Self {
        if e == 0.0 {
            Exponents::one()
        } else {
            Exponents(vec![(v, e)])
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, f64)>) -> Self {
        let mut out = Exponents::one();
        for (v, e) in pairs {
            out = out.mul(&Exponents::single(v, e));
        }
        out
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, f64)> + '_ {
        self.0.iter().copied()
    }

    pub fn get(&self, v: Var) -> f64 {
        match self.0.binary_search_by(|(w, _)| w.cmp(&v)) {
            Ok(i) => self.0[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &Exponents) -> Exponents {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                let e = a[i].1 + b[j].1;
                if e != 0.0 {
                    out.push((a[i].0, e));
                }
                i += 1;
                j += 1;
            }
        }
        Exponents(out)
    }

    pub fn pow(&self, e: f64) -> Exponents {
        if e == 0.0 {
            return Exponents::one();
        }
        Exponents(self.0.iter().map(|&(v, a)| (v, a * e)).collect())
    }

    pub fn without(&self, v: Var) -> Exponents {
        Exponents(self.0.iter().copied().filter(|&(w, _)| w != v).collect())
    }

    fn eval_with(&self, value: &impl Fn(Var) -> Option<f64>) -> Result<f64, ExprError> {
        let mut acc = 1.0;
        for &(v, e) in &self.0 {
            let x = value(v).ok_or(ExprError::Unbound(v))?;
            acc *= powr(x, e);
        }
        Ok(acc)
    }
}

/// `x^e` using integer powers when the exponent is integral.
pub(crate) fn powr(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e.fract() == 0.0 && e.abs() < 64.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

impl PartialEq for Exponents {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Exponents {}

impl PartialOrd for Exponents {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Exponents {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            let c = a.0.cmp(&b.0).then(a.1.total_cmp(&b.1));
            if c != Ordering::Equal {
                return c;
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub exps: Exponents,
}

impl Term {
    pub fn new(coeff: f64, exps: Exponents) -> Self {
        Term { coeff, exps }
    }

    pub fn mul(&self, other: &Term) -> Term {
        Term::new(self.coeff * other.coeff, self.exps.mul(&other.exps))
    }

    pub fn eval_with(&self, value: &impl Fn(Var) -> Option<f64>) -> Result<f64, ExprError> {
        Ok(self.coeff * self.exps.eval_with(value)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Monomial,
    Posynomial,
    Signomial,
}

/// Finite sum of terms with real coefficients; kept sorted and merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Signomial {
    terms: Vec<Term>,
}

impl Signomial {
    pub fn zero() -> Self {
        Signomial { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Signomial::from_terms([Term::new(c, Exponents::one())])
    }

    pub fn var(v: Var) -> Self {
        Signomial::from_terms([Term::new(1.0, Exponents::single(v, 1.0))])
    }

    pub fn monomial(coeff: f64, exps: Exponents) -> Self {
        Signomial::from_terms([Term::new(coeff, exps)])
    }

    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Self {
        let mut terms: Vec<Term> = terms.into_iter().collect();
        terms.sort_by(|a, b| a.exps.cmp(&b.exps));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.exps == t.exps => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.abs() >= ZERO_COEFF);
        Signomial { terms: merged }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The value if the signomial has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [] => Some(0.0),
            [t] if t.exps.is_one() => Some(t.coeff),
            _ => None,
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.terms.iter().flat_map(|t| t.exps.iter().map(|(v, _)| v)).collect()
    }

    pub fn evaluate(&self, u: &Valuation) -> Result<f64, ExprError> {
        self.evaluate_with(|v| u.get(v))
    }

    pub fn evaluate_with(&self, value: impl Fn(Var) -> Option<f64>) -> Result<f64, ExprError> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.eval_with(&value)?;
        }
        Ok(acc)
    }

    pub fn partial_derivative(&self, v: Var) -> Signomial {
        Signomial::from_terms(self.terms.iter().filter_map(|t| {
            let a = t.exps.get(v);
            if a == 0.0 {
                return None;
            }
            let exps = t.exps.without(v).mul(&Exponents::single(v, a - 1.0));
            Some(Term::new(t.coeff * a, exps))
        }))
    }

    pub fn classify(&self) -> Shape {
        if self.terms.is_empty() || self.terms.iter().any(|t| t.coeff <= 0.0) {
            Shape::Signomial
        } else if self.terms.len() == 1 {
            Shape::Monomial
        } else {
            Shape::Posynomial
        }
    }

    pub fn as_monomial(&self) -> Option<Monomial> {
        match self.terms.as_slice() {
            [t] if t.coeff > 0.0 => Some(Monomial { coeff: t.coeff, exps: t.exps.clone() }),
            _ => None,
        }
    }

    pub fn as_posynomial(&self) -> Option<Posynomial> {
        match self.classify() {
            Shape::Signomial => None,
            _ => Some(Posynomial(self.clone())),
        }
    }

    pub fn scale(&self, c: f64) -> Signomial {
        Signomial::from_terms(self.terms.iter().map(|t| Term::new(t.coeff * c, t.exps.clone())))
    }

    pub fn pow_int(&self, n: u32) -> Signomial {
        let mut acc = Signomial::constant(1.0);
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Real power; non-monomials only admit non-negative integer exponents.
    pub fn pow(&self, e: f64) -> Result<Signomial, ExprError> {
        if let Some(m) = self.as_monomial() {
            return Ok(m.pow(e).into());
        }
        if e >= 0.0 && e.fract() == 0.0 && e <= u32::MAX as f64 {
            return Ok(self.pow_int(e as u32));
        }
        Err(ExprError::NonMonomialPower)
    }

    /// Replaces `v` by `e` everywhere.
    pub fn substitute(&self, v: Var, e: &Signomial) -> Result<Signomial, ExprError> {
        let mut acc = Signomial::zero();
        for t in &self.terms {
            let a = t.exps.get(v);
            let rest = Signomial::monomial(t.coeff, t.exps.without(v));
            if a == 0.0 {
                acc = &acc + &rest;
            } else {
                acc = &acc + &(&rest * &e.pow(a)?);
            }
        }
        Ok(acc)
    }

    /// Total degree of each term restricted to `vars`, if all terms agree.
    pub fn homogeneous_degree(&self, vars: &BTreeSet<Var>) -> Option<f64> {
        let mut deg = None;
        for t in &self.terms {
            let d: f64 = t.exps.iter().filter(|(v, _)| vars.contains(v)).map(|(_, e)| e).sum();
            match deg {
                None => deg = Some(d),
                Some(prev) if prev != d => return None,
                _ => {}
            }
        }
        deg
    }

    pub fn display<'a>(&'a self, reg: &'a VarRegistry) -> impl fmt::Display + 'a {
        Shown { s: self, reg }
    }
}

struct Shown<'a> {
    s: &'a Signomial,
    reg: &'a VarRegistry,
}

impl fmt::Display for Shown<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.s.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.s.terms.iter().enumerate() {
            let c = if i == 0 {
                t.coeff
            } else {
                write!(f, "{}", if t.coeff < 0.0 { " - " } else { " + " })?;
                t.coeff.abs()
            };
            if t.exps.is_one() {
                write!(f, "{c}")?;
                continue;
            }
            if c == -1.0 {
                write!(f, "-")?;
            } else if c != 1.0 {
                write!(f, "{c}*")?;
            }
            for (k, (v, e)) in t.exps.iter().enumerate() {
                if k > 0 {
                    write!(f, "*")?;
                }
                write!(f, "{}", self.reg.name(v))?;
                if e != 1.0 {
                    write!(f, "^{e}")?;
                }
            }
        }
        Ok(())
    }
}

impl Add for &Signomial {
    type Output = Signomial;
    fn add(self, rhs: &Signomial) -> Signomial {
        Signomial::from_terms(self.terms.iter().chain(&rhs.terms).cloned())
    }
}

impl Sub for &Signomial {
    type Output = Signomial;
    fn sub(self, rhs: &Signomial) -> Signomial {
        self + &(-rhs)
    }
}

impl Neg for &Signomial {
    type Output = Signomial;
    fn neg(self) -> Signomial {
        self.scale(-1.0)
    }
}

impl Mul for &Signomial {
    type Output = Signomial;
    fn mul(self, rhs: &Signomial) -> Signomial {
        let mut out = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                out.push(a.mul(b));
            }
        }
        Signomial::from_terms(out)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Signomial {
            type Output = Signomial;
            fn $m(self, rhs: Signomial) -> Signomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Signomial {
    type Output = Signomial;
    fn neg(self) -> Signomial {
        -&self
    }
}

/// Single term with positive coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    coeff: f64,
    exps: Exponents,
}

impl Monomial {
    pub fn new(coeff: f64, exps: Exponents) -> Result<Self, ExprError> {
        if coeff > 0.0 && coeff.is_finite() {
            Ok(Monomial { coeff, exps })
        } else {
            Err(ExprError::NotMonomial)
        }
    }

    pub fn constant(c: f64) -> Result<Self, ExprError> {
        Monomial::new(c, Exponents::one())
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn exps(&self) -> &Exponents {
        &self.exps
    }

    pub fn pow(&self, e: f64) -> Monomial {
        Monomial { coeff: self.coeff.powf(e), exps: self.exps.pow(e) }
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial { coeff: self.coeff * other.coeff, exps: self.exps.mul(&other.exps) }
    }

    pub fn recip(&self) -> Monomial {
        self.pow(-1.0)
    }

    pub fn evaluate(&self, u: &Valuation) -> Result<f64, ExprError> {
        Ok(self.coeff * self.exps.eval_with(&|v| u.get(v))?)
    }
}

impl From<Monomial> for Signomial {
    fn from(m: Monomial) -> Signomial {
        Signomial::monomial(m.coeff, m.exps)
    }
}

/// Non-empty sum of monomials.
#[derive(Clone, Debug, PartialEq)]
pub struct Posynomial(Signomial);

impl Posynomial {
    pub fn terms(&self) -> &[Term] {
        self.0.terms()
    }

    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.0.terms().iter().map(|t| Monomial { coeff: t.coeff, exps: t.exps.clone() })
    }

    pub fn as_signomial(&self) -> &Signomial {
        &self.0
    }

    pub fn evaluate(&self, u: &Valuation) -> Result<f64, ExprError> {
        self.0.evaluate(u)
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Posynomial {
        Posynomial(&self.0 * &Signomial::from(m.clone()))
    }

    pub fn add(&self, other: &Posynomial) -> Posynomial {
        Posynomial(&self.0 + &other.0)
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Posynomial {
        Posynomial(m.into())
    }
}

impl From<Posynomial> for Signomial {
    fn from(p: Posynomial) -> Signomial {
        p.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarKind;

    fn reg2() -> (VarRegistry, Var, Var) {
        let mut reg = VarRegistry::new();
        let x = reg.declare("x", VarKind::Parameter).unwrap();
        let y = reg.declare("y", VarKind::Parameter).unwrap();
        (reg, x, y)
    }

    fn sx(v: Var) -> Signomial {
        Signomial::var(v)
    }

    #[test]
    fn evaluate_product_and_sum() {
        let (_, x, y) = reg2();
        let e = &(&sx(x) * &sx(y)).scale(2.0) + &sx(y).pow(-1.0).unwrap();
        let u: Valuation = [(x, 3.0), (y, 0.5)].into_iter().collect();
        assert_eq!(e.evaluate(&u).unwrap(), 5.0);
    }

    #[test]
    fn evaluate_one_minus_p() {
        let (_, x, _) = reg2();
        let e = &Signomial::constant(1.0) - &sx(x);
        let u: Valuation = [(x, 0.4)].into_iter().collect();
        assert!((e.evaluate(&u).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn unbound_variable_errors() {
        let (_, x, y) = reg2();
        let u: Valuation = [(x, 1.0)].into_iter().collect();
        assert_eq!(sx(y).evaluate(&u), Err(ExprError::Unbound(y)));
    }

    #[test]
    fn derivative_of_monomial() {
        let (_, x, y) = reg2();
        let e = Signomial::monomial(3.0, Exponents::from_pairs([(x, 2.0), (y, -1.0)]));
        let d = e.partial_derivative(x);
        assert_eq!(d, Signomial::monomial(6.0, Exponents::from_pairs([(x, 1.0), (y, -1.0)])));
    }

    #[test]
    fn derivative_drops_constants() {
        let (_, x, _) = reg2();
        let e = &Signomial::constant(1.0) - &sx(x);
        assert_eq!(e.partial_derivative(x), Signomial::constant(-1.0));
    }

    #[test]
    fn classify_shapes() {
        let (_, x, y) = reg2();
        let m = &sx(x) * &sx(y);
        assert_eq!(m.classify(), Shape::Monomial);
        assert_eq!((&sx(x) + &sx(y)).classify(), Shape::Posynomial);
        assert_eq!((&Signomial::constant(1.0) - &sx(x)).classify(), Shape::Signomial);
        assert_eq!(Signomial::constant(2.0).classify(), Shape::Monomial);
        assert_eq!(Signomial::zero().classify(), Shape::Signomial);
    }

    #[test]
    fn cancellation_gives_zero() {
        let (_, x, _) = reg2();
        let e = &sx(x) - &sx(x);
        assert!(e.is_zero());
        let one = &(&Signomial::constant(1.0) - &sx(x)) + &sx(x);
        assert_eq!(one.as_constant(), Some(1.0));
    }

    #[test]
    fn substitute_monomial_into_real_power() {
        let (_, x, y) = reg2();
        let e = Signomial::monomial(1.0, Exponents::single(x, 0.5));
        let sub = e.substitute(x, &Signomial::monomial(4.0, Exponents::single(y, 2.0))).unwrap();
        assert_eq!(sub, Signomial::monomial(2.0, Exponents::single(y, 1.0)));
    }

    #[test]
    fn substitute_signomial_into_integer_power() {
        let (_, x, y) = reg2();
        let e = sx(x).pow_int(2);
        let sub = e.substitute(x, &(&Signomial::constant(1.0) - &sx(y))).unwrap();
        let u: Valuation = [(y, 0.25)].into_iter().collect();
        assert!((sub.evaluate(&u).unwrap() - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn substitute_signomial_into_negative_power_fails() {
        let (_, x, y) = reg2();
        let e = sx(x).pow(-1.0).unwrap();
        let bad = e.substitute(x, &(&Signomial::constant(1.0) - &sx(y)));
        assert_eq!(bad, Err(ExprError::NonMonomialPower));
    }

    #[test]
    fn display_is_readable() {
        let (reg, x, y) = reg2();
        let e = &(&Signomial::constant(1.0) - &sx(x)) + &Signomial::monomial(0.5, Exponents::from_pairs([(x, 2.0), (y, -1.0)]));
        assert_eq!(e.display(&reg).to_string(), "1 - x + 0.5*x^2*y^-1");
        assert_eq!(Signomial::zero().display(&reg).to_string(), "0");
        assert_eq!((-&sx(y)).display(&reg).to_string(), "-y");
    }

    #[test]
    fn homogeneous_degree_of_row_sums() {
        let (_, x, y) = reg2();
        let row = &sx(x).scale(0.5) + &sx(y).scale(0.5);
        let vars: BTreeSet<Var> = [x, y].into_iter().collect();
        assert_eq!(row.homogeneous_degree(&vars), Some(1.0));
        let mixed = &row + &Signomial::constant(0.1);
        assert_eq!(mixed.homogeneous_degree(&vars), None);
    }
}
