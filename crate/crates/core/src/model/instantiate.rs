use std::collections::BTreeMap;

use super::{Graph, ModelError, Pmdp, StateId, WELL_DEFINED_TOL};
use crate::expr::Valuation;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstChoice {
    pub action: String,
    pub transitions: Vec<(StateId, f64)>,
    pub cost: f64,
}

/// MDP with numeric transition probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub initial: StateId,
    pub choices: Vec<Vec<ConstChoice>>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.choices.len()
    }

    pub fn graph(&self) -> Graph {
        Graph::new(
            self.choices
                .iter()
                .map(|cs| {
                    cs.iter().map(|c| c.transitions.iter().filter(|(_, p)| *p > 0.0).map(|(t, _)| *t).collect()).collect()
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct Instantiated {
    pub mdp: Mdp,
    pub well_defined: bool,
    /// Largest deviation from a probability distribution over all rows.
    pub violation: f64,
}

pub fn instantiate(m: &Pmdp, u: &Valuation) -> Result<Instantiated, ModelError> {
    let mut violation: f64 = 0.0;
    let mut choices = Vec::with_capacity(m.num_states());
    for cs in &m.choices {
        let mut out = Vec::with_capacity(cs.len());
        for c in cs {
            let mut sum = 0.0;
            let mut transitions = Vec::with_capacity(c.transitions.len());
            for (t, e) in &c.transitions {
                let p = e.evaluate(u)?;
                violation = violation.max(-p).max(p - 1.0);
                sum += p;
                transitions.push((*t, p));
            }
            violation = violation.max((sum - 1.0).abs());
            out.push(ConstChoice { action: c.action.clone(), transitions, cost: c.cost });
        }
        choices.push(out);
    }
    Ok(Instantiated {
        mdp: Mdp { initial: m.initial, choices },
        well_defined: violation <= WELL_DEFINED_TOL,
        violation,
    })
}

/// Randomised memoryless scheduler: one weight per enabled choice.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheduler {
    pub weights: Vec<Vec<f64>>,
}

impl Scheduler {
    pub fn uniform(shape: &[usize]) -> Scheduler {
        Scheduler { weights: shape.iter().map(|&k| vec![1.0 / k as f64; k]).collect() }
    }

    pub fn deterministic(shape: &[usize], pick: &[usize]) -> Result<Scheduler, ModelError> {
        if pick.len() != shape.len() {
            return Err(ModelError::SchedulerShape("wrong number of states".into()));
        }
        let mut weights = Vec::with_capacity(shape.len());
        for (s, (&k, &i)) in shape.iter().zip(pick).enumerate() {
            if i >= k {
                return Err(ModelError::DisabledAction { state: s, action: format!("#{i}") });
            }
            let mut w = vec![0.0; k];
            w[i] = 1.0;
            weights.push(w);
        }
        Ok(Scheduler { weights })
    }

    /// Builds a scheduler from named weights; unlisted states get the uniform distribution.
    pub fn from_named(m: &Pmdp, named: &BTreeMap<(StateId, String), f64>) -> Result<Scheduler, ModelError> {
        let mut weights: Vec<Vec<f64>> = m.choices.iter().map(|cs| vec![0.0; cs.len()]).collect();
        let mut given = vec![false; m.num_states()];
        for ((s, a), &w) in named {
            let i = m
                .choices
                .get(*s)
                .ok_or(ModelError::StateOutOfRange(*s))?
                .iter()
                .position(|c| &c.action == a)
                .ok_or_else(|| ModelError::DisabledAction { state: *s, action: a.clone() })?;
            weights[*s][i] = w;
            given[*s] = true;
        }
        for (s, w) in weights.iter_mut().enumerate() {
            if !given[s] {
                let k = w.len() as f64;
                w.iter_mut().for_each(|x| *x = 1.0 / k);
            }
        }
        let sched = Scheduler { weights };
        sched.validate(&m.choices.iter().map(Vec::len).collect::<Vec<_>>())?;
        Ok(sched)
    }

    pub fn validate(&self, shape: &[usize]) -> Result<(), ModelError> {
        if self.weights.len() != shape.len() {
            return Err(ModelError::SchedulerShape(format!(
                "{} states in scheduler, {} in model",
                self.weights.len(),
                shape.len()
            )));
        }
        for (s, (w, &k)) in self.weights.iter().zip(shape).enumerate() {
            if w.len() != k {
                return Err(ModelError::SchedulerShape(format!("state {s} has {k} actions, scheduler gives {}", w.len())));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|&x| !(0.0..=1.0 + 1e-9).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::SchedulerShape(format!("state {s} weights do not form a distribution")));
            }
        }
        Ok(())
    }
}

/// Markov chain with a per-state cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Mc {
    pub initial: StateId,
    pub rows: Vec<Vec<(StateId, f64)>>,
    pub costs: Vec<f64>,
}

impl Mc {
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn graph(&self) -> Graph {
        Graph::new(
            self.rows.iter().map(|r| vec![r.iter().filter(|(_, p)| *p > 0.0).map(|(t, _)| *t).collect()]).collect(),
        )
    }

    pub fn max_row_error(&self) -> f64 {
        self.rows.iter().map(|r| (r.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn induce(m: &Mdp, sched: &Scheduler) -> Result<Mc, ModelError> {
    sched.validate(&m.choices.iter().map(Vec::len).collect::<Vec<_>>())?;
    let mut rows = Vec::with_capacity(m.num_states());
    let mut costs = Vec::with_capacity(m.num_states());
    for (cs, ws) in m.choices.iter().zip(&sched.weights) {
        let mut row: BTreeMap<StateId, f64> = BTreeMap::new();
        let mut cost = 0.0;
        for (c, &w) in cs.iter().zip(ws) {
            if w == 0.0 {
                continue;
            }
            cost += w * c.cost;
            for &(t, p) in &c.transitions {
                *row.entry(t).or_insert(0.0) += w * p;
            }
        }
        rows.push(row.into_iter().collect());
        costs.push(cost);
    }
    Ok(Mc { initial: m.initial, rows, costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_signomial, VarKind, VarRegistry};
    use crate::model::PmdpBuilder;

    fn coin() -> Pmdp {
        let mut vars = VarRegistry::new();
        vars.declare("p", VarKind::Parameter).unwrap();
        let mut b = PmdpBuilder::new(3, 0, vars);
        let e = |s: &str, b: &PmdpBuilder| parse_signomial(s, |n| b.vars().get(n)).unwrap();
        let (ep, eq) = (e("p", &b), e("1 - p", &b));
        b.transition(0, "flip", 1, ep).unwrap();
        b.transition(0, "flip", 2, eq).unwrap();
        b.transition(0, "stay", 0, e("1", &b)).unwrap();
        b.cost(0, "flip", 2.0).unwrap();
        b.transition(1, "x", 1, e("1", &b)).unwrap();
        b.transition(2, "x", 2, e("1", &b)).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn instantiate_flags_well_definedness() {
        let m = coin();
        let p = m.vars.get("p").unwrap();
        let good = instantiate(&m, &[(p, 0.3)].into_iter().collect()).unwrap();
        assert!(good.well_defined);
        assert_eq!(good.mdp.choices[0][0].transitions, vec![(1, 0.3), (2, 0.7)]);
        let bad = instantiate(&m, &[(p, 1.2)].into_iter().collect()).unwrap();
        assert!(!bad.well_defined);
        assert!((bad.violation - 0.2).abs() < 1e-12);
    }

    #[test]
    fn induce_mixes_rows_and_costs() {
        let m = coin();
        let p = m.vars.get("p").unwrap();
        let mdp = instantiate(&m, &[(p, 0.5)].into_iter().collect()).unwrap().mdp;
        let sched = Scheduler { weights: vec![vec![0.5, 0.5], vec![1.0], vec![1.0]] };
        let mc = induce(&mdp, &sched).unwrap();
        assert_eq!(mc.rows[0], vec![(0, 0.5), (1, 0.25), (2, 0.25)]);
        assert_eq!(mc.costs[0], 1.0);
        assert!(mc.max_row_error() < 1e-15);
    }

    #[test]
    fn scheduler_validation() {
        let m = coin();
        let shape: Vec<usize> = m.choices.iter().map(Vec::len).collect();
        assert!(Scheduler::deterministic(&shape, &[2, 0, 0]).is_err());
        let bad = Scheduler { weights: vec![vec![0.7, 0.7], vec![1.0], vec![1.0]] };
        assert!(bad.validate(&shape).is_err());
        let mut named = BTreeMap::new();
        named.insert((0, "jump".to_string()), 1.0);
        assert!(matches!(Scheduler::from_named(&m, &named), Err(ModelError::DisabledAction { .. })));
        named.clear();
        named.insert((0, "stay".to_string()), 1.0);
        let s = Scheduler::from_named(&m, &named).unwrap();
        assert_eq!(s.weights[0], vec![0.0, 1.0]);
    }
}
