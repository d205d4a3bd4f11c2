//! Signomial encoding of multi-objective synthesis problems and its
//! convexification into geometric programs.

mod applications;
mod convexify;
mod lifting;

pub use applications::{add_cost_bound, add_region, encode_repair, Region, Repair};
pub use convexify::{
    add_region_lift_bounds, convexify, extract_solution, GeometricProgram, GpConstraint, GpEquality, Mode, FLOOR, THRESHOLD_MARGIN,
};
pub use lifting::{Lift, LiftingMap};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::{ExprError, Signomial, Var, VarKind, VarRegistry};
use crate::model::{prob01, prob1e, ModelError, Pmdp, Spec, SpecKind, StateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("row {state}/{action} has more than one non-posynomial successor or one not of the form 1 - (others)")]
    Shape { state: StateId, action: String },
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("no specification or objective given")]
    Empty,
    #[error("cannot convexify {0}")]
    NotConvexifiable(String),
    #[error("bad region: {0}")]
    BadRegion(String),
    #[error("bad repair request: {0}")]
    BadRepair(String),
    #[error("bad objective: {0}")]
    BadObjective(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Coefficient times a product of signomial factors, kept unexpanded so that
/// whole transition expressions stay recognisable.
#[derive(Clone, Debug, PartialEq)]
pub struct Product {
    pub coeff: f64,
    pub factors: Vec<Signomial>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Factored {
    pub products: Vec<Product>,
}

impl Factored {
    pub fn constant(c: f64) -> Self {
        Factored { products: vec![Product { coeff: c, factors: Vec::new() }] }
    }

    pub fn var(v: Var) -> Self {
        Factored { products: vec![Product { coeff: 1.0, factors: vec![Signomial::var(v)] }] }
    }

    pub fn expr(e: Signomial) -> Self {
        Factored { products: vec![Product { coeff: 1.0, factors: vec![e] }] }
    }

    pub fn expand(&self) -> Signomial {
        self.map_factors(|f| f.clone())
    }

    pub fn map_factors(&self, mut f: impl FnMut(&Signomial) -> Signomial) -> Signomial {
        let mut acc = Signomial::zero();
        for p in &self.products {
            let mut term = Signomial::constant(p.coeff);
            for x in &p.factors {
                term = &term * &f(x);
            }
            acc = &acc + &term;
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    Threshold { family: usize },
    SchedulerSimplex { state: StateId },
    RowStochastic { state: StateId, choice: usize },
    Bellman { family: usize, state: StateId },
    Region,
    CostBound,
    RegionLift,
    Floor,
    Ceiling,
    TrustRegion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub lhs: Factored,
    pub rel: Relation,
    pub rhs: Factored,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Const(f64),
    Var(Var),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Family bounded by the property with this index.
    Threshold(usize),
    /// Reachability family whose initial value is maximised.
    Objective,
}

/// Probability or expected-cost unknowns for one property.
#[derive(Clone, Debug)]
pub struct Family {
    pub kind: SpecKind,
    pub role: Role,
    pub target: BTreeSet<StateId>,
    pub values: Vec<Option<Value>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchedEntry {
    Var(Var),
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub enum Objective {
    None,
    MaximizeReach(BTreeSet<StateId>),
    /// Expression over the model parameters plus `regularization` times the
    /// sum of reciprocals of all parameter, lifting and scheduler variables.
    Expression { expr: Signomial, regularization: f64 },
}

#[derive(Clone, Debug)]
pub struct SignomialProgram {
    pub model: Pmdp,
    pub specs: Vec<Spec>,
    pub vars: VarRegistry,
    /// Model parameters occurring in some transition.
    pub params: Vec<Var>,
    pub sched: Vec<Vec<SchedEntry>>,
    pub families: Vec<Family>,
    pub objective: Option<Signomial>,
    pub regularization: f64,
    pub constraints: Vec<Constraint>,
    /// Parameter boxes from region constraints.
    pub boxes: Vec<(Var, f64, f64)>,
}

impl SignomialProgram {
    pub fn sched_vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.sched.iter().flatten().filter_map(|e| match e {
            SchedEntry::Var(v) => Some(*v),
            SchedEntry::Fixed(_) => None,
        })
    }

    pub fn objective_family(&self) -> Option<usize> {
        self.families.iter().position(|f| f.role == Role::Objective)
    }

    /// Sum of reciprocals of parameters and scheduler variables.
    pub fn regularizer(&self) -> Signomial {
        let mut acc = Signomial::zero();
        for v in self.params.iter().copied().chain(self.sched_vars()) {
            acc = &acc + &Signomial::var(v).pow(-1.0).expect("monomial power");
        }
        acc
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        if let Some(obj) = &self.objective {
            let _ = writeln!(out, "minimize {}", obj.display(&self.vars));
        }
        for c in &self.constraints {
            let rel = if c.rel == Relation::Le { "<=" } else { "=" };
            let _ = writeln!(
                out,
                "{:?}: {} {rel} {}",
                c.kind,
                c.lhs.expand().display(&self.vars),
                c.rhs.expand().display(&self.vars)
            );
        }
        out
    }
}

/// Builds the signomial program for `specs` and an optional objective.
pub fn encode_sgp(m: &Pmdp, specs: &[Spec], objective: Objective) -> Result<SignomialProgram, EncodeError> {
    if specs.is_empty() && matches!(objective, Objective::None) {
        return Err(EncodeError::Empty);
    }
    let n = m.num_states();
    for s in specs {
        s.validate(n)?;
    }
    let full = m.graph();

    // Drop actions that lead into states with unavoidably infinite expected cost.
    let mut allowed: Vec<Vec<bool>> = m.choices.iter().map(|cs| vec![true; cs.len()]).collect();
    let pruned_graph = |allowed: &Vec<Vec<bool>>| full.filter_choices(|s, i| allowed[s][i]);
    let cost_goals: Vec<&BTreeSet<StateId>> =
        specs.iter().filter(|s| s.kind == SpecKind::ExpectedCost).map(|s| &s.target).collect();
    loop {
        let mut changed = false;
        for goal in &cost_goals {
            let ok = prob1e(&pruned_graph(&allowed), goal);
            for s in 0..n {
                if !ok[s] || goal.contains(&s) {
                    continue;
                }
                for (i, c) in full.choices(s).iter().enumerate() {
                    if allowed[s][i] && c.iter().any(|&t| !ok[t]) {
                        allowed[s][i] = false;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let g = pruned_graph(&allowed);
    let reachable = g.reachable_from(m.initial);

    let mut vars = m.vars.clone();
    let mut constraints = Vec::new();

    let mut sched = Vec::with_capacity(n);
    for s in 0..n {
        let k = allowed[s].iter().filter(|&&a| a).count();
        let row: Vec<SchedEntry> = allowed[s]
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if !a {
                    SchedEntry::Fixed(0.0)
                } else if k == 1 {
                    SchedEntry::Fixed(1.0)
                } else if reachable[s] {
                    let name = format!("sigma_s{s}_{}", m.choices[s][i].action);
                    SchedEntry::Var(vars.declare_fresh(&name, VarKind::Scheduler))
                } else {
                    SchedEntry::Fixed(1.0 / k as f64)
                }
            })
            .collect();
        let sv: Vec<Var> = row.iter().filter_map(|e| if let SchedEntry::Var(v) = e { Some(*v) } else { None }).collect();
        if !sv.is_empty() {
            let lhs = Factored { products: sv.iter().map(|&v| Product { coeff: 1.0, factors: vec![Signomial::var(v)] }).collect() };
            constraints.push(Constraint {
                kind: ConstraintKind::SchedulerSimplex { state: s },
                lhs,
                rel: Relation::Eq,
                rhs: Factored::constant(1.0),
            });
        }
        sched.push(row);
    }

    let mut params = BTreeSet::new();
    for (s, cs) in m.choices.iter().enumerate() {
        for (i, c) in cs.iter().enumerate() {
            if c.is_constant() {
                continue;
            }
            let lhs = Factored {
                products: c.transitions.iter().map(|(_, e)| Product { coeff: 1.0, factors: vec![e.clone()] }).collect(),
            };
            for (_, e) in &c.transitions {
                params.extend(e.vars());
            }
            constraints.push(Constraint {
                kind: ConstraintKind::RowStochastic { state: s, choice: i },
                lhs,
                rel: Relation::Eq,
                rhs: Factored::constant(1.0),
            });
        }
    }

    let mut families = Vec::new();
    let mut wanted: Vec<(SpecKind, Role, &BTreeSet<StateId>)> =
        specs.iter().enumerate().map(|(i, s)| (s.kind, Role::Threshold(i), &s.target)).collect();
    if let Objective::MaximizeReach(t) = &objective {
        wanted.push((SpecKind::Reach, Role::Objective, t));
    }
    for (f, (kind, role, target)) in wanted.into_iter().enumerate() {
        let mut values = vec![None; n];
        match kind {
            SpecKind::Reach => {
                let pre = prob01(&g, target);
                for s in (0..n).filter(|&s| reachable[s]) {
                    values[s] = Some(if pre.prob0[s] {
                        Value::Const(0.0)
                    } else if pre.prob1[s] {
                        Value::Const(1.0)
                    } else {
                        Value::Var(vars.declare_fresh(&format!("p{f}_s{s}"), VarKind::Probability))
                    });
                }
            }
            SpecKind::ExpectedCost => {
                let ok = prob1e(&g, target);
                let inside: Vec<bool> = (0..n).map(|s| ok[s] && !target.contains(&s)).collect();
                let costly: Vec<bool> = (0..n)
                    .map(|s| {
                        inside[s] && m.choices[s].iter().enumerate().any(|(i, c)| allowed[s][i] && c.cost > 0.0)
                    })
                    .collect();
                let positive = g.backward_reach(&costly, &inside);
                for s in (0..n).filter(|&s| reachable[s]) {
                    values[s] = if target.contains(&s) || (inside[s] && !positive[s]) {
                        Some(Value::Const(0.0))
                    } else if inside[s] {
                        Some(Value::Var(vars.declare_fresh(&format!("c{f}_s{s}"), VarKind::Cost)))
                    } else {
                        None
                    };
                }
            }
        }
        families.push(Family { kind, role, target: target.clone(), values });
    }

    for (f, fam) in families.iter().enumerate() {
        for s in 0..n {
            let Some(Value::Var(v)) = fam.values[s] else { continue };
            let mut products = Vec::new();
            for (i, c) in m.choices[s].iter().enumerate() {
                let mut base = Product { coeff: 1.0, factors: Vec::new() };
                match sched[s][i] {
                    SchedEntry::Fixed(w) if w == 0.0 => continue,
                    SchedEntry::Fixed(w) => base.coeff = w,
                    SchedEntry::Var(sv) => base.factors.push(Signomial::var(sv)),
                }
                if fam.kind == SpecKind::ExpectedCost && c.cost > 0.0 {
                    products.push(Product { coeff: base.coeff * c.cost, factors: base.factors.clone() });
                }
                for (t, e) in &c.transitions {
                    let mut p = base.clone();
                    match fam.values[*t] {
                        Some(Value::Const(x)) if x == 0.0 => continue,
                        Some(Value::Const(x)) => p.coeff *= x,
                        Some(Value::Var(tv)) => p.factors.push(Signomial::var(tv)),
                        None => {
                            return Err(EncodeError::Infeasible(format!(
                                "state {t} has unbounded expected cost but is reachable"
                            )))
                        }
                    }
                    match e.as_constant() {
                        Some(x) => p.coeff *= x,
                        None => p.factors.push(e.clone()),
                    }
                    if p.coeff != 0.0 {
                        products.push(p);
                    }
                }
            }
            constraints.push(Constraint {
                kind: ConstraintKind::Bellman { family: f, state: s },
                lhs: Factored::var(v),
                rel: Relation::Eq,
                rhs: Factored { products },
            });
        }
    }

    for (f, fam) in families.iter().enumerate() {
        let Role::Threshold(i) = fam.role else { continue };
        let spec = &specs[i];
        match fam.values[m.initial] {
            Some(Value::Var(v)) => {
                if spec.bound <= 0.0 {
                    return Err(EncodeError::Infeasible(format!(
                        "threshold 0 for `{}` cannot be met by strictly positive variables",
                        spec.label
                    )));
                }
                constraints.push(Constraint {
                    kind: ConstraintKind::Threshold { family: f },
                    lhs: Factored::var(v),
                    rel: Relation::Le,
                    rhs: Factored::constant(spec.bound),
                });
            }
            Some(Value::Const(x)) if x <= spec.bound => {}
            Some(Value::Const(x)) => {
                return Err(EncodeError::Infeasible(format!("`{}` has fixed value {x} above {}", spec.label, spec.bound)))
            }
            None => {
                return Err(EncodeError::Infeasible(format!("expected cost for `{}` is unbounded", spec.label)))
            }
        }
    }

    let mut sgp = SignomialProgram {
        model: m.clone(),
        specs: specs.to_vec(),
        vars,
        params: params.into_iter().collect(),
        sched,
        families,
        objective: None,
        regularization: 0.0,
        constraints,
        boxes: Vec::new(),
    };
    match objective {
        Objective::None => {}
        Objective::MaximizeReach(_) => {
            let f = sgp.objective_family().expect("objective family");
            sgp.objective = Some(match sgp.families[f].values[m.initial] {
                Some(Value::Var(v)) => Signomial::var(v).pow(-1.0)?,
                Some(Value::Const(x)) if x > 0.0 => Signomial::constant(1.0 / x),
                _ => return Err(EncodeError::BadObjective("target is unreachable from the initial state".into())),
            });
        }
        Objective::Expression { expr, regularization } => {
            if let Some(v) = expr.vars().into_iter().find(|v| m.vars.len() <= v.index()) {
                return Err(EncodeError::BadObjective(format!("objective uses unknown variable {v}")));
            }
            sgp.objective = Some(&expr + &sgp.regularizer().scale(regularization));
            sgp.regularization = regularization;
        }
    }
    Ok(sgp)
}
