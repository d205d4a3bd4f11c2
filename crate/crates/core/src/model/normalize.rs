use std::collections::{BTreeMap, BTreeSet};

use super::{instantiate, ModelError, Pmdp, Scheduler, StateId};
use crate::expr::{Signomial, Valuation, Var};

/// Relative disagreement tolerated when two rows ask for different scalings of a variable.
const SCALE_CONFLICT_TOL: f64 = 1e-6;

/// Successor expressions of one state/action pair, over the raw solution variables.
#[derive(Clone, Debug)]
pub struct RowScale {
    pub state: StateId,
    pub action: String,
    pub entries: Vec<Signomial>,
}

/// Rescales variables so every parametric row sums to one.
///
/// A row sum must split into a constant part and a part that is homogeneous of
/// degree one in the row's variables; those variables are then scaled by the
/// factor that closes the gap to one.
pub fn normalize_rows(rows: &[RowScale], raw: &Valuation) -> Result<Valuation, ModelError> {
    let mut scale: BTreeMap<Var, (f64, usize)> = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        let sum = row.entries.iter().fold(Signomial::zero(), |acc, e| &acc + e);
        let vars: BTreeSet<Var> = sum.vars();
        if vars.is_empty() {
            continue;
        }
        let fail = |reason: &str| ModelError::NotNormalizable {
            state: row.state,
            action: row.action.clone(),
            reason: reason.to_string(),
        };
        let mut c0 = 0.0;
        let mut lin = 0.0;
        for t in sum.terms() {
            let deg: f64 = t.exps.iter().map(|(_, e)| e).sum();
            let val = t.eval_with(&|v| raw.get(v))?;
            if t.exps.is_one() {
                c0 += val;
            } else if deg == 1.0 {
                lin += val;
            } else {
                return Err(fail("row sum is not affine in its variables"));
            }
        }
        if !(lin > 0.0) || c0 >= 1.0 {
            return Err(fail("no positive scaling closes the row"));
        }
        let k = (1.0 - c0) / lin;
        for v in vars {
            match scale.get(&v) {
                Some(&(prev, _)) if ((prev - k) / prev).abs() > SCALE_CONFLICT_TOL => {
                    let other = &rows[scale[&v].1];
                    return Err(fail(&format!(
                        "conflicting scaling with row {}/{} ({prev} vs {k})",
                        other.state, other.action
                    )));
                }
                Some(_) => {}
                None => {
                    scale.insert(v, (k, idx));
                }
            }
        }
    }
    let mut out = Valuation::new();
    for (v, x) in raw.iter() {
        let k = scale.get(&v).map_or(1.0, |s| s.0);
        out.insert(v, x * k)?;
    }
    Ok(out)
}

pub fn normalize_scheduler(raw: &[Vec<f64>]) -> Result<Scheduler, ModelError> {
    let mut weights = Vec::with_capacity(raw.len());
    for (s, w) in raw.iter().enumerate() {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) || w.iter().any(|&x| x < 0.0) {
            return Err(ModelError::SchedulerShape(format!("state {s} has no positive weight")));
        }
        weights.push(w.iter().map(|x| x / sum).collect());
    }
    Ok(Scheduler { weights })
}

/// Turns a raw solution of a relaxed program into a well-defined valuation and scheduler.
pub fn normalize_solution(m: &Pmdp, raw: &Valuation, sched_raw: &[Vec<f64>]) -> Result<(Valuation, Scheduler), ModelError> {
    let rows: Vec<RowScale> = m
        .choices
        .iter()
        .enumerate()
        .flat_map(|(s, cs)| {
            cs.iter().filter(|c| !c.is_constant()).map(move |c| RowScale {
                state: s,
                action: c.action.clone(),
                entries: c.transitions.iter().map(|(_, e)| e.clone()).collect(),
            })
        })
        .collect();
    let u = normalize_rows(&rows, raw)?;
    let sched = normalize_scheduler(sched_raw)?;
    sched.validate(&m.choices.iter().map(Vec::len).collect::<Vec<_>>())?;
    let inst = instantiate(m, &u)?;
    if !inst.well_defined {
        return Err(ModelError::NotWellDefined(format!("rows deviate by {}", inst.violation)));
    }
    Ok((u, sched))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_signomial, VarKind, VarRegistry};

    fn setup() -> (VarRegistry, Var, Var) {
        let mut reg = VarRegistry::new();
        let p = reg.declare("p", VarKind::Parameter).unwrap();
        let pb = reg.declare("pb", VarKind::Lifting).unwrap();
        (reg, p, pb)
    }

    fn row(reg: &VarRegistry, entries: &[&str]) -> RowScale {
        RowScale {
            state: 0,
            action: "a".into(),
            entries: entries.iter().map(|e| parse_signomial(e, |n| reg.get(n)).unwrap()).collect(),
        }
    }

    #[test]
    fn scales_substochastic_pair() {
        let (reg, p, pb) = setup();
        let raw: Valuation = [(p, 0.3), (pb, 0.5)].into_iter().collect();
        let u = normalize_rows(&[row(&reg, &["p", "pb"])], &raw).unwrap();
        assert!((u.get(p).unwrap() - 0.375).abs() < 1e-15);
        assert!((u.get(pb).unwrap() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn respects_constant_mass() {
        let (reg, p, pb) = setup();
        let raw: Valuation = [(p, 0.2), (pb, 0.2)].into_iter().collect();
        let u = normalize_rows(&[row(&reg, &["0.2", "p", "pb"])], &raw).unwrap();
        assert!((u.get(p).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn idempotent() {
        let (reg, p, pb) = setup();
        let raw: Valuation = [(p, 0.1), (pb, 0.7)].into_iter().collect();
        let rows = [row(&reg, &["p", "pb"])];
        let once = normalize_rows(&rows, &raw).unwrap();
        let twice = normalize_rows(&rows, &once).unwrap();
        for (v, x) in once.iter() {
            assert!((twice.get(v).unwrap() - x).abs() < 1e-15);
        }
    }

    #[test]
    fn conflicting_rows_error() {
        let (reg, p, pb) = setup();
        let raw: Valuation = [(p, 0.3), (pb, 0.5)].into_iter().collect();
        let rows = [row(&reg, &["p", "pb"]), row(&reg, &["p", "0.5"])];
        assert!(matches!(normalize_rows(&rows, &raw), Err(ModelError::NotNormalizable { .. })));
    }

    #[test]
    fn nonlinear_row_errors() {
        let (reg, p, pb) = setup();
        let raw: Valuation = [(p, 0.3), (pb, 0.5)].into_iter().collect();
        assert!(normalize_rows(&[row(&reg, &["p^2", "pb"])], &raw).is_err());
    }

    #[test]
    fn scheduler_weights_rescale() {
        let s = normalize_scheduler(&[vec![0.3, 0.3], vec![0.2]]).unwrap();
        assert_eq!(s.weights, vec![vec![0.5, 0.5], vec![1.0]]);
        assert!(normalize_scheduler(&[vec![0.0, 0.0]]).is_err());
    }
}
