use std::collections::BTreeSet;

use super::StateId;

/// Successor lists per state and choice, ignoring probabilities.
#[derive(Clone, Debug)]
pub struct Graph {
    succ: Vec<Vec<Vec<StateId>>>,
    pred: Vec<Vec<StateId>>,
}

/// States reaching the target with probability 0 (resp. 1) under every scheduler.
#[derive(Clone, Debug, PartialEq)]
pub struct Prob01 {
    pub prob0: Vec<bool>,
    pub prob1: Vec<bool>,
}

impl Graph {
    pub fn new(succ: Vec<Vec<Vec<StateId>>>) -> Self {
        let mut pred = vec![Vec::new(); succ.len()];
        for (s, cs) in succ.iter().enumerate() {
            for &t in cs.iter().flatten() {
                pred[t].push(s);
            }
        }
        for p in &mut pred {
            p.sort_unstable();
            p.dedup();
        }
        Graph { succ, pred }
    }

    pub fn num_states(&self) -> usize {
        self.succ.len()
    }

    pub fn choices(&self, s: StateId) -> &[Vec<StateId>] {
        &self.succ[s]
    }

    pub fn reachable_from(&self, init: StateId) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut stack = vec![init];
        seen[init] = true;
        while let Some(s) = stack.pop() {
            for &t in self.succ[s].iter().flatten() {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    /// States with a path into `targets` that stays inside `allowed` before arriving.
    pub fn backward_reach(&self, targets: &[bool], allowed: &[bool]) -> Vec<bool> {
        let mut seen = targets.to_vec();
        let mut stack: Vec<StateId> = (0..self.num_states()).filter(|&s| targets[s]).collect();
        while let Some(t) = stack.pop() {
            for &s in &self.pred[t] {
                if !seen[s] && allowed[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    }

    /// Restricts each state to the choices accepted by `keep`.
    pub fn filter_choices(&self, keep: impl Fn(StateId, usize) -> bool) -> Graph {
        Graph::new(
            self.succ
                .iter()
                .enumerate()
                .map(|(s, cs)| cs.iter().enumerate().filter(|(i, _)| keep(s, *i)).map(|(_, c)| c.clone()).collect())
                .collect(),
        )
    }
}

pub fn prob01(g: &Graph, targets: &BTreeSet<StateId>) -> Prob01 {
    let n = g.num_states();
    let is_target: Vec<bool> = (0..n).map(|s| targets.contains(&s)).collect();
    let all = vec![true; n];
    let can_reach = g.backward_reach(&is_target, &all);
    let prob0: Vec<bool> = can_reach.iter().map(|&r| !r).collect();

    // States where some scheduler avoids the target forever.
    let mut avoid: Vec<bool> = is_target.iter().map(|&t| !t).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if avoid[s] && !g.choices(s).iter().any(|c| c.iter().all(|&t| avoid[t])) {
                avoid[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let non_target: Vec<bool> = is_target.iter().map(|&t| !t).collect();
    let escape = g.backward_reach(&avoid, &non_target);
    let prob1 = escape.iter().map(|&e| !e).collect();
    Prob01 { prob0, prob1 }
}

/// States from which some scheduler reaches `targets` with probability one.
pub fn prob1e(g: &Graph, targets: &BTreeSet<StateId>) -> Vec<bool> {
    let n = g.num_states();
    let mut u = vec![true; n];
    loop {
        let mut r: Vec<bool> = (0..n).map(|s| targets.contains(&s)).collect();
        loop {
            let mut changed = false;
            for s in 0..n {
                if !r[s]
                    && u[s]
                    && g.choices(s).iter().any(|c| c.iter().all(|&t| u[t]) && c.iter().any(|&t| r[t]))
                {
                    r[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if r == u {
            return u;
        }
        u = r;
    }
}
