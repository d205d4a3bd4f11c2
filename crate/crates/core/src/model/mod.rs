//! Parametric MDPs, schedulers, instantiation and graph preprocessing.

mod graph;
mod instantiate;
mod normalize;

pub use graph::{prob01, prob1e, Graph, Prob01};
pub use instantiate::{induce, instantiate, Instantiated, Mc, Mdp, Scheduler};
pub use normalize::{normalize_rows, normalize_scheduler, normalize_solution, RowScale};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{ExprError, Signomial, Valuation, VarRegistry};

pub type StateId = usize;

/// Tolerance used when deciding whether an instantiation is well defined.
pub const WELL_DEFINED_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state {0} is out of range")]
    StateOutOfRange(StateId),
    #[error("state {0} has no enabled action")]
    Deadlock(StateId),
    #[error("duplicate transition {from} --{action}--> {to}")]
    DuplicateTransition { from: StateId, action: String, to: StateId },
    #[error("cost of action `{action}` in state {state} must be a finite non-negative number")]
    BadCost { state: StateId, action: String },
    #[error("action `{action}` is not enabled in state {state}")]
    DisabledAction { state: StateId, action: String },
    #[error("scheduler does not match the model: {0}")]
    SchedulerShape(String),
    #[error("valuation is not well defined: {0}")]
    NotWellDefined(String),
    #[error("row {state}/{action} cannot be normalised: {reason}")]
    NotNormalizable { state: StateId, action: String, reason: String },
    #[error("bad specification: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: String,
    pub transitions: Vec<(StateId, Signomial)>,
    pub cost: f64,
}

impl Choice {
    pub fn is_constant(&self) -> bool {
        self.transitions.iter().all(|(_, e)| e.as_constant().is_some())
    }
}

/// Parametric MDP; a parametric Markov chain is the special case with one choice per state.
#[derive(Clone, Debug)]
pub struct Pmdp {
    pub vars: VarRegistry,
    pub state_names: Vec<String>,
    pub initial: StateId,
    pub choices: Vec<Vec<Choice>>,
    pub labels: BTreeMap<String, BTreeSet<StateId>>,
}

impl Pmdp {
    pub fn num_states(&self) -> usize {
        self.choices.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.choices.iter().flatten().map(|c| c.transitions.len()).sum()
    }

    /// Number of enabled choices per state.
    pub fn shape(&self) -> Vec<usize> {
        self.choices.iter().map(Vec::len).collect()
    }

    pub fn is_pmc(&self) -> bool {
        self.choices.iter().all(|c| c.len() == 1)
    }

    pub fn label(&self, name: &str) -> Option<&BTreeSet<StateId>> {
        self.labels.get(name)
    }

    pub fn choice_index(&self, s: StateId, action: &str) -> Option<usize> {
        self.choices.get(s)?.iter().position(|c| c.action == action)
    }

    /// Parameter-free copy with every transition evaluated at `u`.
    pub fn fixed(&self, u: &Valuation) -> Result<Pmdp, ModelError> {
        let mut out = self.clone();
        out.vars = VarRegistry::new();
        for c in out.choices.iter_mut().flatten() {
            for (_, e) in c.transitions.iter_mut() {
                *e = Signomial::constant(e.evaluate(u)?);
            }
        }
        Ok(out)
    }

    pub fn graph(&self) -> Graph {
        Graph::new(
            self.choices
                .iter()
                .map(|cs| {
                    cs.iter()
                        .map(|c| c.transitions.iter().filter(|(_, e)| !e.is_zero()).map(|(t, _)| *t).collect())
                        .collect()
                })
                .collect(),
        )
    }
}

/// Incremental construction with validation at [`PmdpBuilder::build`].
#[derive(Clone, Debug)]
pub struct PmdpBuilder {
    vars: VarRegistry,
    state_names: Vec<String>,
    initial: StateId,
    choices: Vec<Vec<Choice>>,
    labels: BTreeMap<String, BTreeSet<StateId>>,
}

impl PmdpBuilder {
    pub fn new(num_states: usize, initial: StateId, vars: VarRegistry) -> Self {
        PmdpBuilder {
            vars,
            state_names: (0..num_states).map(|s| format!("s{s}")).collect(),
            initial,
            choices: vec![Vec::new(); num_states],
            labels: BTreeMap::new(),
        }
    }

    pub fn vars(&self) -> &VarRegistry {
        &self.vars
    }

    fn check(&self, s: StateId) -> Result<(), ModelError> {
        if s < self.choices.len() {
            Ok(())
        } else {
            Err(ModelError::StateOutOfRange(s))
        }
    }

    fn choice_mut(&mut self, s: StateId, action: &str) -> &mut Choice {
        let cs = &mut self.choices[s];
        let i = match cs.iter().position(|c| c.action == action) {
            Some(i) => i,
            None => {
                cs.push(Choice { action: action.to_string(), transitions: Vec::new(), cost: 0.0 });
                cs.len() - 1
            }
        };
        &mut cs[i]
    }

    pub fn name_state(&mut self, s: StateId, name: &str) -> Result<(), ModelError> {
        self.check(s)?;
        self.state_names[s] = name.to_string();
        Ok(())
    }

    pub fn transition(&mut self, s: StateId, action: &str, t: StateId, p: Signomial) -> Result<(), ModelError> {
        self.check(s)?;
        self.check(t)?;
        let c = self.choice_mut(s, action);
        if c.transitions.iter().any(|(u, _)| *u == t) {
            return Err(ModelError::DuplicateTransition { from: s, action: action.to_string(), to: t });
        }
        c.transitions.push((t, p));
        Ok(())
    }

    pub fn cost(&mut self, s: StateId, action: &str, cost: f64) -> Result<(), ModelError> {
        self.check(s)?;
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(ModelError::BadCost { state: s, action: action.to_string() });
        }
        self.choice_mut(s, action).cost = cost;
        Ok(())
    }

    pub fn label(&mut self, name: &str, s: StateId) -> Result<(), ModelError> {
        self.check(s)?;
        self.labels.entry(name.to_string()).or_default().insert(s);
        Ok(())
    }

    pub fn build(self) -> Result<Pmdp, ModelError> {
        self.check(self.initial)?;
        for (s, cs) in self.choices.iter().enumerate() {
            if cs.is_empty() || cs.iter().any(|c| c.transitions.is_empty()) {
                return Err(ModelError::Deadlock(s));
            }
        }
        Ok(Pmdp {
            vars: self.vars,
            state_names: self.state_names,
            initial: self.initial,
            choices: self.choices,
            labels: self.labels,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecKind {
    Reach,
    ExpectedCost,
}

/// Upper-bounded reachability or expected-cost property.
#[derive(Clone, Debug, PartialEq)]
pub struct Spec {
    pub kind: SpecKind,
    pub bound: f64,
    pub label: String,
    pub target: BTreeSet<StateId>,
}

impl Spec {
    pub fn reach(bound: f64, label: &str, m: &Pmdp) -> Result<Spec, ModelError> {
        Spec::new(SpecKind::Reach, bound, label, m)
    }

    pub fn expected_cost(bound: f64, label: &str, m: &Pmdp) -> Result<Spec, ModelError> {
        Spec::new(SpecKind::ExpectedCost, bound, label, m)
    }

    pub fn new(kind: SpecKind, bound: f64, label: &str, m: &Pmdp) -> Result<Spec, ModelError> {
        let target = m.label(label).ok_or_else(|| ModelError::BadSpec(format!("unknown label `{label}`")))?.clone();
        let spec = Spec { kind, bound, label: label.to_string(), target };
        spec.validate(m.num_states())?;
        Ok(spec)
    }

    pub fn validate(&self, num_states: usize) -> Result<(), ModelError> {
        let ok = match self.kind {
            SpecKind::Reach => (0.0..=1.0).contains(&self.bound),
            SpecKind::ExpectedCost => self.bound >= 0.0 && self.bound.is_finite(),
        };
        if !ok {
            return Err(ModelError::BadSpec(format!("threshold {} out of range", self.bound)));
        }
        if let Some(&s) = self.target.iter().find(|&&s| s >= num_states) {
            return Err(ModelError::StateOutOfRange(s));
        }
        Ok(())
    }
}
