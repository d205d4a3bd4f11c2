//! Monomials, posynomials and signomials over positive real variables.

mod parse;
mod signomial;

pub use parse::{parse_signomial, Parser};
pub use signomial::{Exponents, Monomial, Posynomial, Shape, Signomial, Term};

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

/// Terms whose coefficient magnitude falls below this are dropped.
pub const ZERO_COEFF: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("variable {0} has no value")]
    Unbound(Var),
    #[error("variable {var} must be positive, got {value}")]
    NonPositive { var: Var, value: f64 },
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("expression is not a monomial")]
    NotMonomial,
    #[error("expression is not a posynomial")]
    NotPosynomial,
    #[error("non-integer or negative power of a non-monomial")]
    NonMonomialPower,
    #[error("division by a non-monomial")]
    NonMonomialDivisor,
    #[error("parse error at column {col}: {msg}")]
    Parse { col: usize, msg: String },
}

/// Index of a variable inside a [`VarRegistry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Parameter,
    Lifting,
    Scheduler,
    Probability,
    Cost,
}

#[derive(Clone, Debug, Default)]
pub struct VarRegistry {
    names: Vec<String>,
    kinds: Vec<VarKind>,
    by_name: HashMap<String, Var>,
}

impl VarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, name: &str, kind: VarKind) -> Result<Var, ExprError> {
        if self.by_name.contains_key(name) {
            return Err(ExprError::DuplicateName(name.to_string()));
        }
        let v = Var(self.names.len() as u32);
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.by_name.insert(name.to_string(), v);
        Ok(v)
    }

    /// Declares a variable, appending underscores to `base` until the name is free.
    pub fn declare_fresh(&mut self, base: &str, kind: VarKind) -> Var {
        let mut name = base.to_string();
        while self.by_name.contains_key(&name) {
            name.push('_');
        }
        self.declare(&name, kind).expect("name is free")
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.index()]
    }

    pub fn kind(&self, v: Var) -> VarKind {
        self.kinds[v.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.names.len() as u32).map(Var)
    }

    pub fn of_kind(&self, kind: VarKind) -> impl Iterator<Item = Var> + '_ {
        self.iter().filter(move |&v| self.kind(v) == kind)
    }
}

/// Assignment of strictly positive reals to variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Valuation(BTreeMap<Var, f64>);

impl Valuation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: Var, value: f64) -> Result<(), ExprError> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ExprError::NonPositive { var: v, value });
        }
        self.0.insert(v, value);
        Ok(())
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        self.0.get(&v).copied()
    }

    pub fn contains(&self, v: Var) -> bool {
        self.0.contains_key(&v)
    }

    pub fn remove(&mut self, v: Var) -> Option<f64> {
        self.0.remove(&v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, f64)> + '_ {
        self.0.iter().map(|(&v, &x)| (v, x))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(Var, f64)> for Valuation {
    /// Panics on non-positive values; use [`Valuation::insert`] for fallible input.
    fn from_iter<I: IntoIterator<Item = (Var, f64)>>(iter: I) -> Self {
        let mut val = Valuation::new();
        for (v, x) in iter {
            val.insert(v, x).expect("valuation entries must be positive");
        }
        val
    }
}
