//! End-to-end acceptance checks. Runs without the libtest harness so every
//! `criterion N: PASS|FAIL` line is printed; exits non-zero if any fails.

use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmdp_gp::analysis::{check_pmdp, induced_chain, reachability};
use pmdp_gp::benchmarks::{brp_like, ky_die, multi_dice, random_pmc, random_pmdp};
use pmdp_gp::encoder::{
    convexify, encode_sgp, extract_solution, ConstraintKind, LiftingMap, Mode, Objective, Region, Role, Value,
};
use pmdp_gp::expr::{Exponents, Monomial, Posynomial, Signomial, Valuation, Var, VarKind, VarRegistry};
use pmdp_gp::gp::{solve, to_convex, Options, Status};
use pmdp_gp::model::{instantiate, Pmdp, Scheduler, Spec, StateId};
use pmdp_gp::scp::monomial_approx;
use pmdp_gp::tasks::{cmd_feasible, cmd_optimize, cmd_region, cmd_repair, Config, ReportStatus};

static FAILURES: AtomicUsize = AtomicUsize::new(0);

fn report(n: u32, ok: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        FAILURES.fetch_add(1, Ordering::Relaxed);
    }
}

fn param(m: &Pmdp, name: &str) -> Var {
    m.vars.get(name).expect("declared parameter")
}

fn valuation(m: &Pmdp, vals: &[(&str, f64)]) -> Valuation {
    vals.iter().map(|&(n, x)| (param(m, n), x)).collect()
}

/// Closed-form outcome probabilities of the two-coin die: the left coin
/// subtree loops through `p * q`, the right one through `p * q` as well.
fn die_oracle(p: f64, q: f64) -> [f64; 6] {
    let l = 1.0 - p * q;
    let left = [q * (1.0 - p) / l, (1.0 - q) * (1.0 - p) / l, (1.0 - q) * p / l];
    let r = 1.0 - q * p;
    let right = [q * (1.0 - p) / r, (1.0 - q) * (1.0 - p) / r, (1.0 - q) * p / r];
    [p * left[0], p * left[1], p * left[2], (1.0 - p) * right[0], (1.0 - p) * right[1], (1.0 - p) * right[2]]
}

fn die_outcomes(m: &Pmdp, u: &Valuation) -> Vec<f64> {
    let sched = Scheduler::uniform(&m.shape());
    let specs: Vec<Spec> = (1..=6).map(|k| Spec::reach(1.0, &format!("die{k}"), m).unwrap()).collect();
    check_pmdp(m, u, &sched, &specs).unwrap().iter().map(|o| o.value).collect()
}

fn criterion_01_die_instantiation() {
    let start = Instant::now();
    let m = ky_die();
    let u = valuation(&m, &[("p", 0.4), ("q", 0.7)]);
    let inst = instantiate(&m, &u).unwrap();
    let outcomes = die_outcomes(&m, &u);
    let elapsed = start.elapsed();

    let edge = |s: StateId, t: StateId| {
        inst.mdp.choices[s][0].transitions.iter().find(|(x, _)| *x == t).map(|(_, p)| *p).unwrap()
    };
    let expected = [(0, 1, 0.4), (0, 2, 0.6), (1, 3, 0.7), (1, 4, 0.3), (2, 5, 0.7), (2, 6, 0.3), (3, 1, 0.4), (3, 7, 0.6)];
    let edges_ok = expected.iter().all(|&(s, t, p)| (edge(s, t) - p).abs() < 1e-15);
    let sum: f64 = outcomes.iter().sum();
    let oracle = die_oracle(0.4, 0.7);
    let oracle_ok = outcomes.iter().zip(oracle).all(|(a, b)| (a - b).abs() < 1e-12);
    let ok = inst.well_defined && edges_ok && oracle_ok && (sum - 1.0).abs() < 1e-9 && elapsed < Duration::from_millis(100);
    report(1, ok, &format!("edges {edges_ok} oracle {oracle_ok} sum {sum:.15} in {elapsed:?}"));
}

fn criterion_02_fair_die() {
    let m = ky_die();
    let outcomes = die_outcomes(&m, &valuation(&m, &[("p", 0.5), ("q", 0.5)]));
    let worst = outcomes.iter().map(|v| (v - 1.0 / 6.0).abs()).fold(0.0, f64::max);
    report(2, worst < 1e-9, &format!("max deviation from 1/6 is {worst:.2e}"));
}

fn fair_die_changeable(m: &Pmdp) -> Vec<(StateId, String, StateId)> {
    (0..7).flat_map(|s| m.choices[s][0].transitions.iter().map(move |(t, _)| (s, "flip".to_string(), *t))).collect()
}

fn criterion_03_repair() {
    let die = ky_die();
    let m = die.fixed(&valuation(&die, &[("p", 0.5), ("q", 0.5)])).unwrap();
    let specs = [Spec::reach(0.125, "die2", &m).unwrap()];
    let start = Instant::now();
    let r = cmd_repair(&m, &specs, &fair_die_changeable(&m), None, &Config::default()).unwrap();
    let elapsed = start.elapsed();
    let value = r.specs.first().map_or(f64::NAN, |s| s.value);
    let cost = r.repair_cost.unwrap_or(f64::NAN);
    let ok = r.status == ReportStatus::Repaired
        && (0.115..=0.125).contains(&value)
        && cost <= 0.05
        && elapsed < Duration::from_secs(30);
    report(3, ok, &format!("status {:?} value {value:.6} cost {cost:.6} in {elapsed:?}", r.status));
}

fn criterion_04_parameter_scaling() {
    let mut times = Vec::new();
    let mut ok = true;
    let mut detail = String::new();
    for k in [2, 4, 6, 8] {
        let m = multi_dice(k).unwrap();
        let specs = [Spec::reach(0.2, "sum10", &m).unwrap(), Spec::reach(0.3, "high", &m).unwrap()];
        let start = Instant::now();
        let r = cmd_feasible(&m, &specs, None, &Config::default()).unwrap();
        let t = start.elapsed().as_secs_f64();
        ok &= r.status == ReportStatus::Feasible && t < 5.0;
        times.push(t);
        detail += &format!("{k} params ({} states, {} transitions): {:?} {t:.3}s; ", m.num_states(), m.num_transitions(), r.status);
    }
    let growth = times[3] / times[0];
    ok &= growth < 5.0;
    report(4, ok, &format!("{detail}growth {growth:.2}x"));
}

/// Reachability of `goal` in a random pMC compiled to affine rows, for fast
/// exhaustive grid evaluation by dense elimination.
struct AffinePmc {
    /// Per state: (successor, constant, coefficient of p, coefficient of q).
    rows: Vec<Vec<(usize, f64, f64, f64)>>,
    goal: usize,
    /// States that can reach the goal, goal excluded.
    live: Vec<usize>,
}

impl AffinePmc {
    fn new(m: &Pmdp) -> Self {
        let p = m.vars.get("p");
        let q = m.vars.get("q");
        let goal = *m.label("goal").unwrap().iter().next().unwrap();
        let rows: Vec<Vec<(usize, f64, f64, f64)>> = m
            .choices
            .iter()
            .map(|cs| {
                cs[0].transitions
                    .iter()
                    .map(|(t, e)| {
                        let (mut c, mut a, mut b) = (0.0, 0.0, 0.0);
                        for term in e.terms() {
                            let vars: Vec<(Var, f64)> = term.exps.iter().collect();
                            match vars.as_slice() {
                                [] => c += term.coeff,
                                [(v, e)] if *e == 1.0 && Some(*v) == p => a += term.coeff,
                                [(v, e)] if *e == 1.0 && Some(*v) == q => b += term.coeff,
                                _ => panic!("non-affine entry"),
                            }
                        }
                        (*t, c, a, b)
                    })
                    .collect()
            })
            .collect();
        let n = rows.len();
        let mut reach = vec![false; n];
        reach[goal] = true;
        loop {
            let mut changed = false;
            for s in 0..n {
                if !reach[s] && rows[s].iter().any(|r| reach[r.0]) {
                    reach[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let live = (0..n).filter(|&s| reach[s] && s != goal).collect();
        AffinePmc { rows, goal, live }
    }

    fn value(&self, p: f64, q: f64, a: &mut Vec<f64>, idx: &mut [usize]) -> f64 {
        let k = self.live.len();
        if k == 0 {
            return if self.goal == 0 { 1.0 } else { 0.0 };
        }
        for (i, &s) in self.live.iter().enumerate() {
            idx[s] = i;
        }
        let w = k + 1;
        a.clear();
        a.resize(k * w, 0.0);
        for (i, &s) in self.live.iter().enumerate() {
            a[i * w + i] += 1.0;
            for &(t, c, x, y) in &self.rows[s] {
                let pr = c + x * p + y * q;
                if t == self.goal {
                    a[i * w + k] += pr;
                } else if idx[t] != usize::MAX {
                    a[i * w + idx[t]] -= pr;
                }
            }
        }
        for col in 0..k {
            let piv = a[col * w + col];
            for r in col + 1..k {
                let f = a[r * w + col] / piv;
                if f != 0.0 {
                    for j in col..w {
                        a[r * w + j] -= f * a[col * w + j];
                    }
                }
            }
        }
        let mut x = vec![0.0; k];
        for r in (0..k).rev() {
            let mut acc = a[r * w + k];
            for j in r + 1..k {
                acc -= a[r * w + j] * x[j];
            }
            x[r] = acc / a[r * w + r];
        }
        for &s in &self.live {
            idx[s] = usize::MAX;
        }
        self.live.iter().position(|&s| s == 0).map_or(0.0, |i| x[i])
    }

    fn grid_max(&self, two: bool) -> f64 {
        let mut a = Vec::new();
        let mut idx = vec![usize::MAX; self.rows.len()];
        let mut best: f64 = 0.0;
        for i in 1..1000 {
            let p = i as f64 * 1e-3;
            if two {
                for j in 1..1000 {
                    best = best.max(self.value(p, j as f64 * 1e-3, &mut a, &mut idx));
                }
            } else {
                best = best.max(self.value(p, 0.5, &mut a, &mut idx));
            }
        }
        best
    }
}

fn criterion_05_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut solve_time = Duration::ZERO;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut count = 0;
    while count < 50 {
        let n = rng.gen_range(10..=30);
        let k = rng.gen_range(1..=2);
        let m = random_pmc(&mut rng, n, k);
        let oracle = AffinePmc::new(&m);
        if !oracle.live.contains(&0) || m.vars.len() < k {
            continue;
        }
        count += 1;
        let start = Instant::now();
        let r = cmd_optimize(&m, &[], "goal", None, &Config::default()).unwrap();
        solve_time += start.elapsed();
        let best = oracle.grid_max(m.vars.len() == 2);
        let got = r.objective.unwrap_or(f64::NAN);
        let gap = best - got;
        worst = worst.max(gap.abs());
        if !(r.status == ReportStatus::Optimized && gap.abs() <= 1e-2) {
            failures.push(format!("#{count} n={n}: {:?} got {got:.5} grid {best:.5}", r.status));
        }
    }
    let ok = failures.is_empty() && solve_time < Duration::from_secs(300);
    report(5, ok, &format!("worst gap {worst:.2e}, optimise time {solve_time:?}, failures {failures:?}"));
}

/// One random instance of the soundness suite: the feasibility relaxation's
/// solution together with the exact values at its normalised point.
struct SoundnessCase {
    satisfied: bool,
    dominated: bool,
    max_row_slack: f64,
    extracted: bool,
}

fn soundness_case(m: &Pmdp, specs: &[Spec]) -> Option<SoundnessCase> {
    let sgp = encode_sgp(m, specs, Objective::None).ok()?;
    let lifting = LiftingMap::build(&sgp).unwrap();
    let gp = convexify(&sgp, &lifting, Mode::Feasibility).unwrap();
    let res = solve(&to_convex(&gp), &Options::default(), None);
    if res.status != Status::Optimal {
        return None;
    }
    let max_row_slack = gp
        .inequalities
        .iter()
        .filter(|c| matches!(c.kind, ConstraintKind::RowStochastic { .. } | ConstraintKind::SchedulerSimplex { .. }))
        .map(|c| (c.expr.evaluate(&res.x).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    let Ok((u, sched)) = extract_solution(&sgp, &lifting, &res.x) else {
        return Some(SoundnessCase { satisfied: false, dominated: false, max_row_slack, extracted: false });
    };
    let satisfied = check_pmdp(m, &u, &sched, specs).unwrap().iter().all(|o| o.satisfied);
    let mc = induced_chain(m, &u, &sched).unwrap();
    let mut dominated = true;
    for f in &sgp.families {
        let Role::Threshold(i) = f.role else { continue };
        let exact = reachability(&mc, &specs[i].target).unwrap();
        for (s, v) in f.values.iter().enumerate() {
            if let Some(Value::Var(v)) = v {
                dominated &= res.x.get(*v).unwrap() >= exact[s] - 1e-7;
            }
        }
    }
    Some(SoundnessCase { satisfied, dominated, max_row_slack, extracted: true })
}

/// 100 random feasible pMDPs: the bound is 1.1 times the value some random
/// valuation achieves under the uniform scheduler.
fn soundness_suite() -> &'static [SoundnessCase] {
    static SUITE: OnceLock<Vec<SoundnessCase>> = OnceLock::new();
    SUITE.get_or_init(build_soundness_suite)
}

fn build_soundness_suite() -> Vec<SoundnessCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases = Vec::new();
    while cases.len() < 100 {
        let n = rng.gen_range(6..=15);
        let m = random_pmdp(&mut rng, n, 2);
        let u: Valuation = m.vars.iter().map(|v| (v, rng.gen_range(0.2..0.8))).collect();
        let sched = Scheduler::uniform(&m.shape());
        let witness = check_pmdp(&m, &u, &sched, &[Spec::reach(1.0, "goal", &m).unwrap()]).unwrap()[0].value;
        if !(1e-6..0.9).contains(&witness) {
            continue;
        }
        let specs = [Spec::reach(1.1 * witness, "goal", &m).unwrap()];
        if let Some(c) = soundness_case(&m, &specs) {
            cases.push(c);
        }
    }
    cases
}

fn criterion_06_soundness() {
    let cases = soundness_suite();
    let bad = cases.iter().filter(|c| !(c.extracted && c.satisfied && c.dominated)).count();
    let unextracted = cases.iter().filter(|c| !c.extracted).count();
    report(6, bad == 0, &format!("{bad} of {} instances violate (not well-defined: {unextracted})", cases.len()));
}

fn criterion_07_tightness() {
    let cases = soundness_suite();
    let loose: Vec<f64> = cases.iter().map(|c| c.max_row_slack).filter(|&s| s > 1e-6).collect();
    let worst = loose.iter().copied().fold(0.0, f64::max);
    report(7, loose.is_empty(), &format!("{} of {} optima have a slack row, worst {worst:.3e}", loose.len(), cases.len()));
}

fn criterion_08_scp_behaviour() {
    let cfg = Config::default();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, history: &[f64], iterations: usize, increasing: bool| {
        let mono = history.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
        ok &= mono && iterations <= 15;
        lines.push(format!("{name}: {iterations} steps monotone {mono}"));
    };
    let die = ky_die();
    let r = cmd_optimize(&die, &[Spec::reach(0.3, "die2", &die).unwrap()], "die6", None, &cfg).unwrap();
    let s = r.scp.expect("optimisation runs SCP");
    check("ky_die", &s.history, s.iterations, true);
    for k in [2, 4] {
        let m = multi_dice(k).unwrap();
        let r = cmd_optimize(&m, &[Spec::reach(0.3, "sum10", &m).unwrap()], "high", None, &cfg).unwrap();
        let s = r.scp.expect("optimisation runs SCP");
        check(&format!("multi_dice({k})"), &s.history, s.iterations, true);
    }
    let brp = brp_like(2, 2);
    let r = cmd_optimize(&brp, &[], "done", None, &cfg).unwrap();
    let s = r.scp.expect("optimisation runs SCP");
    check("brp_like", &s.history, s.iterations, true);
    let fair = die.fixed(&valuation(&die, &[("p", 0.5), ("q", 0.5)])).unwrap();
    let r = cmd_repair(&fair, &[Spec::reach(0.125, "die2", &fair).unwrap()], &fair_die_changeable(&fair), None, &cfg).unwrap();
    let s = r.scp.expect("repair runs SCP");
    check("ky_die repair", &s.history, s.iterations, false);
    report(8, ok, &lines.join("; "));
}

fn criterion_09_monomial_approximation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let nv = rng.gen_range(1..=4);
        let mut reg = VarRegistry::new();
        let vars: Vec<Var> = (0..nv).map(|i| reg.declare(&format!("x{i}"), VarKind::Parameter).unwrap()).collect();
        let nt = rng.gen_range(1..=5);
        let mut p = Posynomial::from(Monomial::new(rng.gen_range(0.1..3.0), Exponents::one()).unwrap());
        for _ in 0..nt {
            let exps = Exponents::from_pairs(vars.iter().map(|&v| (v, rng.gen_range(-2.0..2.0))));
            p = p.add(&Monomial::new(rng.gen_range(0.1..3.0), exps).unwrap().into());
        }
        let x: Valuation = vars.iter().map(|&v| (v, rng.gen_range(0.2..3.0))).collect();
        let m = monomial_approx(&p, &x).unwrap();
        let f = p.evaluate(&x).unwrap();
        worst = worst.max(((m.evaluate(&x).unwrap() - f) / f).abs());
        for &v in &vars {
            let xv = x.get(v).unwrap();
            let h = 1e-5 * xv;
            let at = |d: f64| {
                let mut y = x.clone();
                y.insert(v, xv + d).unwrap();
                y
            };
            let fd = (p.evaluate(&at(h)).unwrap() - p.evaluate(&at(-h)).unwrap()) / (2.0 * h);
            let md = (m.evaluate(&at(h)).unwrap() - m.evaluate(&at(-h)).unwrap()) / (2.0 * h);
            let exact = Signomial::from(m.clone()).partial_derivative(v).evaluate(&x).unwrap();
            let scale = fd.abs().max(f / xv);
            worst = worst.max((exact - fd).abs() / scale).max((md - fd).abs() / scale);
        }
    }
    report(9, worst < 1e-5, &format!("worst relative error {worst:.2e}"));
}

fn criterion_10_region_certification() {
    let m = ky_die();
    let (p, q) = (param(&m, "p"), param(&m, "q"));
    let cfg = Config::default();
    let unsafe_box = Region { boxes: vec![(p, 0.45, 0.55), (q, 0.45, 0.55)], linear: Vec::new() };
    let start = Instant::now();
    let a = cmd_region(&m, &[Spec::reach(0.01, "die2", &m).unwrap()], &[unsafe_box], &cfg).unwrap();
    let ta = start.elapsed();
    let around = Region { boxes: vec![(p, 0.4, 0.6), (q, 0.4, 0.6)], linear: Vec::new() };
    let start = Instant::now();
    let b = cmd_region(&m, &[Spec::reach(0.2, "die2", &m).unwrap()], &[around], &cfg).unwrap();
    let tb = start.elapsed();
    let ok = a.status == ReportStatus::Unsafe
        && b.status == ReportStatus::Unknown
        && ta < Duration::from_secs(5)
        && tb < Duration::from_secs(5);
    report(10, ok, &format!("unsafe box {:?} in {ta:?}; box around p=q=0.5 {:?} in {tb:?}", a.status, b.status));
}

fn main() -> ExitCode {
    let criteria: [fn(); 10] = [
        criterion_01_die_instantiation,
        criterion_02_fair_die,
        criterion_03_repair,
        criterion_04_parameter_scaling,
        criterion_05_grid_oracle,
        criterion_06_soundness,
        criterion_07_tightness,
        criterion_08_scp_behaviour,
        criterion_09_monomial_approximation,
        criterion_10_region_certification,
    ];
    for (i, c) in criteria.iter().enumerate() {
        if std::panic::catch_unwind(c).is_err() {
            report(i as u32 + 1, false, "panicked");
        }
    }
    let failed = FAILURES.load(Ordering::Relaxed);
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
