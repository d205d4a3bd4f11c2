//! Bundled example models and random instance generators.

use rand::Rng;

use crate::expr::{Signomial, Var, VarKind, VarRegistry};
use crate::model::{ModelError, Pmdp, PmdpBuilder, StateId};

fn one_minus(v: Var) -> Signomial {
    &Signomial::constant(1.0) - &Signomial::var(v)
}

/// Wires one Knuth-Yao die whose flips use `(p, q)` on the left subtree and
/// `(p2, q2)` on the right one. `internal` are the seven coin states, `out`
/// the six outcome states.
fn wire_die(
    b: &mut PmdpBuilder,
    internal: [StateId; 7],
    out: [StateId; 6],
    left: (Var, Var),
    right: (Var, Var),
) -> Result<(), ModelError> {
    let [s0, s1, s2, s3, s4, s5, s6] = internal;
    let (p, q) = left;
    let (p2, q2) = right;
    let a = "flip";
    b.transition(s0, a, s1, Signomial::var(p))?;
    b.transition(s0, a, s2, one_minus(p))?;
    b.transition(s1, a, s3, Signomial::var(q))?;
    b.transition(s1, a, s4, one_minus(q))?;
    b.transition(s3, a, s1, Signomial::var(p))?;
    b.transition(s3, a, out[0], one_minus(p))?;
    b.transition(s4, a, out[1], one_minus(p))?;
    b.transition(s4, a, out[2], Signomial::var(p))?;
    b.transition(s2, a, s5, Signomial::var(q2))?;
    b.transition(s2, a, s6, one_minus(q2))?;
    b.transition(s5, a, s2, Signomial::var(p2))?;
    b.transition(s5, a, out[3], one_minus(p2))?;
    b.transition(s6, a, out[4], one_minus(p2))?;
    b.transition(s6, a, out[5], Signomial::var(p2))?;
    Ok(())
}

/// The two-coin Knuth-Yao die over parameters `p` and `q`. States 7..=12 are
/// the outcomes, labelled `die1`..`die6`, each with a self loop.
pub fn ky_die() -> Pmdp {
    let mut vars = VarRegistry::new();
    let p = vars.declare("p", VarKind::Parameter).expect("fresh registry");
    let q = vars.declare("q", VarKind::Parameter).expect("fresh registry");
    let mut b = PmdpBuilder::new(13, 0, vars);
    wire_die(&mut b, [0, 1, 2, 3, 4, 5, 6], [7, 8, 9, 10, 11, 12], (p, q), (p, q)).expect("valid states");
    for k in 0..6 {
        let s = 7 + k;
        b.name_state(s, &format!("die{}", k + 1)).expect("valid state");
        b.transition(s, "done", s, Signomial::constant(1.0)).expect("valid state");
        b.label(&format!("die{}", k + 1), s).expect("valid state");
    }
    b.build().expect("well-formed die")
}

/// Three Knuth-Yao dice rolled in sequence while tracking the running sum.
///
/// `num_params` (even, 2..=12) parameters are spread round-robin over the six
/// die halves. The final sums 3..=18 are absorbing and labelled `sumK`.
pub fn multi_dice(num_params: usize) -> Result<Pmdp, ModelError> {
    if num_params < 2 || num_params % 2 == 1 || num_params > 12 {
        return Err(ModelError::BadSpec(format!("multi_dice needs an even parameter count in 2..=12, got {num_params}")));
    }
    let mut vars = VarRegistry::new();
    let pairs: Vec<(Var, Var)> = (0..num_params / 2)
        .map(|i| {
            let p = vars.declare(&format!("p{i}"), VarKind::Parameter).expect("fresh name");
            let q = vars.declare(&format!("q{i}"), VarKind::Parameter).expect("fresh name");
            (p, q)
        })
        .collect();
    // Layers: running sum before die d ranges over d..=6d (d = 0 means only sum 0).
    let sums_before = |d: usize| -> Vec<usize> { if d == 0 { vec![0] } else { (d..=6 * d).collect() } };
    let mut blocks = Vec::new();
    let mut next = 0;
    for d in 0..3 {
        for sum in sums_before(d) {
            blocks.push((d, sum, next));
            next += 7;
        }
    }
    let finals: Vec<usize> = (3..=18).collect();
    let final_base = next;
    let n = next + finals.len();
    let mut b = PmdpBuilder::new(n, 0, vars);
    let entry = |d: usize, sum: usize| -> StateId {
        if d == 3 {
            final_base + sum - 3
        } else {
            blocks.iter().find(|x| x.0 == d && x.1 == sum).expect("block").2
        }
    };
    for &(d, sum, base) in &blocks {
        let internal = [base, base + 1, base + 2, base + 3, base + 4, base + 5, base + 6];
        let out: Vec<StateId> = (1..=6).map(|k| entry(d + 1, sum + k)).collect();
        let out: [StateId; 6] = out.try_into().expect("six outcomes");
        let left = pairs[(2 * d) % pairs.len()];
        let right = pairs[(2 * d + 1) % pairs.len()];
        wire_die(&mut b, internal, out, left, right)?;
        for (k, s) in internal.iter().enumerate() {
            b.name_state(*s, &format!("d{d}_sum{sum}_c{k}"))?;
        }
    }
    for (i, sum) in finals.iter().enumerate() {
        let s = final_base + i;
        b.name_state(s, &format!("sum{sum}"))?;
        b.transition(s, "done", s, Signomial::constant(1.0))?;
        b.label(&format!("sum{sum}"), s)?;
        if *sum >= 15 {
            b.label("high", s)?;
        }
    }
    b.build()
}

/// A bounded-retransmission style protocol for `chunks` chunks with at most
/// `max_retries` retries per chunk. Messages are lost with probability `pl`
/// and acknowledgements with `pk`; after a timeout the sender may `retry` on
/// the lossy channel or `switch` to a backup channel that loses with constant
/// probability 0.2 but costs three units instead of one.
pub fn brp_like(chunks: usize, max_retries: usize) -> Pmdp {
    let mut vars = VarRegistry::new();
    let pl = vars.declare("pl", VarKind::Parameter).expect("fresh registry");
    let pk = vars.declare("pk", VarKind::Parameter).expect("fresh registry");
    // Per (chunk, retry): send, delivered, timeout. Then done and fail.
    let per = 3;
    let idx = |c: usize, r: usize, k: usize| (c * (max_retries + 1) + r) * per + k;
    let done = chunks * (max_retries + 1) * per;
    let fail = done + 1;
    let mut b = PmdpBuilder::new(fail + 1, 0, vars);
    for c in 0..chunks {
        for r in 0..=max_retries {
            let (send, delivered, timeout) = (idx(c, r, 0), idx(c, r, 1), idx(c, r, 2));
            let next_chunk = if c + 1 == chunks { done } else { idx(c + 1, 0, 0) };
            b.name_state(send, &format!("c{c}_r{r}_send")).expect("valid");
            b.name_state(delivered, &format!("c{c}_r{r}_delivered")).expect("valid");
            b.name_state(timeout, &format!("c{c}_r{r}_timeout")).expect("valid");
            b.transition(send, "send", timeout, Signomial::var(pl)).expect("valid");
            b.transition(send, "send", delivered, one_minus(pl)).expect("valid");
            b.cost(send, "send", 1.0).expect("valid");
            b.transition(delivered, "ack", timeout, Signomial::var(pk)).expect("valid");
            b.transition(delivered, "ack", next_chunk, one_minus(pk)).expect("valid");
            if r < max_retries {
                b.transition(timeout, "retry", idx(c, r + 1, 0), Signomial::constant(1.0)).expect("valid");
                b.transition(timeout, "switch", idx(c, r + 1, 1), Signomial::constant(0.8)).expect("valid");
                b.transition(timeout, "switch", idx(c, r + 1, 2), Signomial::constant(0.2)).expect("valid");
                b.cost(timeout, "switch", 3.0).expect("valid");
            } else {
                b.transition(timeout, "give_up", fail, Signomial::constant(1.0)).expect("valid");
            }
        }
    }
    b.name_state(done, "done").expect("valid");
    b.name_state(fail, "fail").expect("valid");
    b.transition(done, "stay", done, Signomial::constant(1.0)).expect("valid");
    b.transition(fail, "stay", fail, Signomial::constant(1.0)).expect("valid");
    b.label("done", done).expect("valid");
    b.label("fail", fail).expect("valid");
    b.label("finished", done).expect("valid");
    b.label("finished", fail).expect("valid");
    b.build().expect("well-formed protocol")
}

/// Random pMC with `n` states over at most two parameters `p` and `q`.
///
/// State `n-2` is the target `goal`, state `n-1` an absorbing sink `bad`.
/// Every other state has one row, either parametric (`x` / `1 - x` to two
/// successors, optionally with a constant share to a third) or constant.
pub fn random_pmc<R: Rng>(rng: &mut R, n: usize, num_params: usize) -> Pmdp {
    assert!(n >= 4 && (1..=2).contains(&num_params));
    let mut vars = VarRegistry::new();
    let params: Vec<Var> = ["p", "q"][..num_params]
        .iter()
        .map(|name| vars.declare(name, VarKind::Parameter).expect("fresh registry"))
        .collect();
    let goal = n - 2;
    let sink = n - 1;
    let mut b = PmdpBuilder::new(n, 0, vars);
    for s in 0..goal {
        // Bias successors forward so that most states can reach the target.
        let pick = |rng: &mut R, avoid: &[StateId]| loop {
            let t = if rng.gen_bool(0.7) { rng.gen_range(s + 1..n) } else { rng.gen_range(0..n) };
            if !avoid.contains(&t) {
                return t;
            }
        };
        let t1 = pick(rng, &[]);
        let t2 = pick(rng, &[t1]);
        if rng.gen_bool(0.75) {
            let x = params[rng.gen_range(0..params.len())];
            if rng.gen_bool(0.3) {
                let t3 = pick(rng, &[t1, t2]);
                let c: f64 = (rng.gen_range(1..=4) as f64) / 10.0;
                b.transition(s, "a", t3, Signomial::constant(c)).expect("valid");
                b.transition(s, "a", t1, Signomial::var(x).scale(1.0 - c)).expect("valid");
                let rest = &Signomial::constant(1.0 - c) - &Signomial::var(x).scale(1.0 - c);
                b.transition(s, "a", t2, rest).expect("valid");
            } else {
                b.transition(s, "a", t1, Signomial::var(x)).expect("valid");
                b.transition(s, "a", t2, one_minus(x)).expect("valid");
            }
        } else {
            let c: f64 = (rng.gen_range(1..=9) as f64) / 10.0;
            b.transition(s, "a", t1, Signomial::constant(c)).expect("valid");
            b.transition(s, "a", t2, Signomial::constant(1.0 - c)).expect("valid");
        }
    }
    b.transition(goal, "stay", goal, Signomial::constant(1.0)).expect("valid");
    b.transition(sink, "stay", sink, Signomial::constant(1.0)).expect("valid");
    b.name_state(goal, "goal").expect("valid");
    b.name_state(sink, "bad").expect("valid");
    b.label("goal", goal).expect("valid");
    b.label("bad", sink).expect("valid");
    b.build().expect("well-formed random pMC")
}

/// Random pMDP: like [`random_pmc`] but some states get a second action.
pub fn random_pmdp<R: Rng>(rng: &mut R, n: usize, num_params: usize) -> Pmdp {
    let base = random_pmc(rng, n, num_params);
    let mut b = PmdpBuilder::new(n, base.initial, base.vars.clone());
    for (s, cs) in base.choices.iter().enumerate() {
        b.name_state(s, &base.state_names[s]).expect("valid");
        for c in cs {
            for (t, e) in &c.transitions {
                b.transition(s, &c.action, *t, e.clone()).expect("valid");
            }
            b.cost(s, &c.action, rng.gen_range(1..=3) as f64).expect("valid");
        }
        if s + 2 < n && rng.gen_bool(0.4) {
            let t1 = rng.gen_range(s + 1..n);
            let t2 = rng.gen_range(0..n);
            if t1 == t2 {
                b.transition(s, "b", t1, Signomial::constant(1.0)).expect("valid");
            } else {
                let c = (rng.gen_range(1..=9) as f64) / 10.0;
                b.transition(s, "b", t1, Signomial::constant(c)).expect("valid");
                b.transition(s, "b", t2, Signomial::constant(1.0 - c)).expect("valid");
            }
            b.cost(s, "b", rng.gen_range(1..=3) as f64).expect("valid");
        }
    }
    for (name, states) in &base.labels {
        for &s in states {
            b.label(name, s).expect("valid");
        }
    }
    b.build().expect("well-formed random pMDP")
}
