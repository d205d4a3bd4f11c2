use std::time::{Duration, Instant};

use serde::Serialize;

use super::{Affine, ConvexForm, LogSumExp};
use crate::expr::Valuation;
use crate::linalg::{CscMatrix, SparseLu};

/// Phase-one slack above which the problem is declared infeasible.
pub const INFEASIBLE_SLACK: f64 = 1e-8;
const STEP_FRACTION: f64 = 0.99;
const PIVOT_TOL: f64 = 0.1;
const MAX_REG_RETRIES: usize = 6;
const REFINE_STEPS: usize = 3;
/// Constraints touching more variables get their rank-one Hessian term through an auxiliary KKT row.
const WIDE: usize = 8;
/// Tolerance accepted when rounding stalls progress before the requested one is met.
const REDUCED: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct Options {
    pub feastol: f64,
    pub gaptol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { feastol: 1e-8, gaptol: 1e-8, max_iter: 200, verbose: false }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: Status,
    pub x: Valuation,
    /// Log-space point, indexed like `ConvexForm::vars`.
    pub y: Vec<f64>,
    /// Value of the GP objective at `x`.
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub phase1_iterations: usize,
    /// Optimal phase-one slack, when phase one ran.
    pub phase1_slack: Option<f64>,
    pub wall_time: Duration,
}

/// Minimise `y[target]` subject to `f_i(y) <= 0` and `a_j . y + b_j = 0`.
struct Problem<'a> {
    n: usize,
    target: usize,
    ineq: Vec<LogSumExp>,
    eq: &'a [Affine],
    /// Phase one: the first `k` inequalities are `f_i - t`; stop once all `f_i < 0`.
    early_exit: Option<usize>,
}

struct Outcome {
    status: Status,
    y: Vec<f64>,
    iterations: usize,
    primal: f64,
    dual: f64,
    gap: f64,
}

fn with_column(f: &LogSumExp, col: usize, coeff: f64) -> LogSumExp {
    LogSumExp {
        terms: f
            .terms
            .iter()
            .map(|t| {
                let mut a = t.a.clone();
                a.push((col, coeff));
                Affine { a, b: t.b }
            })
            .collect(),
    }
}

pub fn solve(cf: &ConvexForm, opts: &Options, start: Option<&[f64]>) -> SolveResult {
    let clock = Instant::now();
    let n = cf.num_vars();
    let y0: Vec<f64> = match start {
        Some(s) if s.len() == n && s.iter().all(|v| v.is_finite()) => s.to_vec(),
        _ => vec![0.0; n],
    };
    let finish = |status: Status, y: Vec<f64>, o: Option<&Outcome>, p1_iters: usize, slack: Option<f64>| SolveResult {
        status,
        x: cf.valuation(&y),
        objective: cf.objective.eval(&y).exp(),
        primal_residual: o.map_or(f64::NAN, |o| o.primal),
        dual_residual: o.map_or(f64::NAN, |o| o.dual),
        gap: o.map_or(f64::NAN, |o| o.gap),
        iterations: p1_iters + o.map_or(0, |o| o.iterations),
        phase1_iterations: p1_iters,
        phase1_slack: slack,
        y,
        wall_time: clock.elapsed(),
    };
    if cf.trivially_infeasible.is_some() || !equalities_consistent(n, &cf.equalities) {
        return finish(Status::Infeasible, y0, None, 0, None);
    }

    let mut y = y0;
    let mut p1_iters = 0;
    let mut slack = None;
    if !cf.inequalities.is_empty() {
        let (p1, t) = phase1(cf, &y, opts);
        p1_iters = p1.iterations;
        slack = Some(t);
        match p1.status {
            Status::Optimal if t > INFEASIBLE_SLACK => {
                return finish(Status::Infeasible, p1.y[..n].to_vec(), Some(&p1), 0, slack);
            }
            Status::Optimal => y = p1.y[..n].to_vec(),
            status => return finish(status, p1.y[..n].to_vec(), Some(&p1), 0, slack),
        }
    }
    // Epigraph form: minimise t subject to objective(y) - t <= 0.
    let mut ineq = cf.inequalities.clone();
    ineq.push(with_column(&cf.objective, n, -1.0));
    let mut start = y;
    start.push(cf.objective.eval(&start) + 1.0);
    let problem = Problem { n: n + 1, target: n, ineq, eq: &cf.equalities, early_exit: None };
    let mut out = run(&problem, start, opts, "phase 2");
    out.y.truncate(n);
    finish(out.status, out.y.clone(), Some(&out), p1_iters, slack)
}

/// Minimises `t` subject to `f_i(y) <= t`, `t >= -1` and the equalities.
fn phase1(cf: &ConvexForm, y0: &[f64], opts: &Options) -> (Outcome, f64) {
    let n = cf.num_vars();
    let mut ineq: Vec<LogSumExp> = cf.inequalities.iter().map(|f| with_column(f, n, -1.0)).collect();
    ineq.push(LogSumExp { terms: vec![Affine { a: vec![(n, -1.0)], b: -1.0 }] });
    let worst = cf.inequalities.iter().map(|f| f.eval(y0)).fold(f64::NEG_INFINITY, f64::max);
    let mut start = y0.to_vec();
    start.push(worst.max(-0.5) + 1.0);
    let k = cf.inequalities.len();
    let problem = Problem { n: n + 1, target: n, ineq, eq: &cf.equalities, early_exit: Some(k) };
    let out = run(&problem, start, opts, "phase 1");
    let t = out.y[n];
    (out, t)
}

/// Least-norm solve of the equalities; false when they admit no solution.
fn equalities_consistent(n: usize, eq: &[Affine]) -> bool {
    if eq.is_empty() {
        return true;
    }
    let p = eq.len();
    let delta = 1e-12;
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, 1.0));
    }
    for (j, e) in eq.iter().enumerate() {
        for &(i, c) in &e.a {
            trip.push((n + j, i, c));
            trip.push((i, n + j, c));
        }
        trip.push((n + j, n + j, -delta));
    }
    let k = CscMatrix::from_triplets(n + p, &mut trip);
    let mut rhs = vec![0.0; n + p];
    for (j, e) in eq.iter().enumerate() {
        rhs[n + j] = -e.b;
    }
    let Ok(lu) = SparseLu::factor(&k, 1.0) else { return false };
    let Ok(sol) = lu.solve(&rhs) else { return false };
    let y = &sol[..n];
    eq.iter().all(|e| e.eval(y).abs() <= 1e-7 * (1.0 + e.b.abs()))
}

struct Eval {
    f: Vec<f64>,
    /// Softmax weights per inequality.
    w: Vec<Vec<f64>>,
    /// Sparse gradient per inequality.
    g: Vec<Vec<(usize, f64)>>,
}

#[derive(Default)]
struct Scratch {
    val: Vec<f64>,
    seen: Vec<bool>,
}

fn evaluate(pb: &Problem, y: &[f64], scratch: &mut Scratch) -> Eval {
    let mut f = Vec::with_capacity(pb.ineq.len());
    let mut ws = Vec::with_capacity(pb.ineq.len());
    let mut gs = Vec::with_capacity(pb.ineq.len());
    scratch.val.resize(pb.n, 0.0);
    scratch.seen.resize(pb.n, false);
    for c in &pb.ineq {
        let (v, w) = c.eval_weights(y);
        let mut idx = Vec::new();
        for (t, &wk) in c.terms.iter().zip(&w) {
            for &(i, a) in &t.a {
                if !scratch.seen[i] {
                    scratch.seen[i] = true;
                    idx.push(i);
                }
                scratch.val[i] += wk * a;
            }
        }
        idx.sort_unstable();
        let g: Vec<(usize, f64)> = idx
            .iter()
            .map(|&i| {
                scratch.seen[i] = false;
                (i, std::mem::take(&mut scratch.val[i]))
            })
            .collect();
        f.push(v);
        ws.push(w);
        gs.push(g);
    }
    Eval { f, w: ws, g: gs }
}

struct Residuals {
    rd: Vec<f64>,
    rp: Vec<f64>,
    re: Vec<f64>,
}

fn residuals(pb: &Problem, y: &[f64], ev: &Eval, s: &[f64], lam: &[f64], nu: &[f64]) -> Residuals {
    let mut rd = vec![0.0; pb.n];
    rd[pb.target] = 1.0;
    for (g, &l) in ev.g.iter().zip(lam) {
        for &(i, v) in g {
            rd[i] += l * v;
        }
    }
    for (e, &v) in pb.eq.iter().zip(nu) {
        for &(i, c) in &e.a {
            rd[i] += c * v;
        }
    }
    let rp = ev.f.iter().zip(s).map(|(f, s)| f + s).collect();
    let re = pb.eq.iter().map(|e| e.eval(y)).collect();
    Residuals { rd, rp, re }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton matrix
/// `[H + sum rho_k g_k g_k', A'; A, -reg]` where wide rank-one terms are
/// carried by auxiliary rows `[g_k' , -1/rho_k]`.
fn assemble(pb: &Problem, ev: &Eval, s: &[f64], lam: &[f64], reg: f64) -> CscMatrix {
    let n = pb.n;
    let p = pb.eq.len();
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut aux = n + p;
    for (k, c) in pb.ineq.iter().enumerate() {
        let l = lam[k];
        if !c.is_affine() {
            for (t, &w) in c.terms.iter().zip(&ev.w[k]) {
                for &(i, a) in &t.a {
                    for &(j, b) in &t.a {
                        trip.push((i, j, l * w * a * b));
                    }
                }
            }
        }
        let rho = l / s[k] - if c.is_affine() { 0.0 } else { l };
        if ev.g[k].len() > WIDE {
            if rho != 0.0 {
                for &(i, a) in &ev.g[k] {
                    trip.push((i, aux, a));
                    trip.push((aux, i, a));
                }
                trip.push((aux, aux, -1.0 / rho));
            } else {
                trip.push((aux, aux, 1.0));
            }
            aux += 1;
        } else {
            for &(i, a) in &ev.g[k] {
                for &(j, b) in &ev.g[k] {
                    trip.push((i, j, rho * a * b));
                }
            }
        }
    }
    for i in 0..n {
        trip.push((i, i, reg));
    }
    for (j, e) in pb.eq.iter().enumerate() {
        for &(i, c) in &e.a {
            trip.push((n + j, i, c));
            trip.push((i, n + j, c));
        }
        trip.push((n + j, n + j, -reg));
    }
    CscMatrix::from_triplets(aux, &mut trip)
}

fn factor(pb: &Problem, ev: &Eval, s: &[f64], lam: &[f64]) -> Option<(SparseLu, CscMatrix)> {
    let mut reg = 1e-10;
    for _ in 0..MAX_REG_RETRIES {
        let k = assemble(pb, ev, s, lam, reg);
        if let Ok(lu) = SparseLu::factor(&k, PIVOT_TOL) {
            return Some((lu, k));
        }
        reg *= 100.0;
    }
    None
}

struct Direction {
    dy: Vec<f64>,
    ds: Vec<f64>,
    dl: Vec<f64>,
    dn: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn direction(
    pb: &Problem,
    kkt: &(SparseLu, CscMatrix),
    ev: &Eval,
    r: &Residuals,
    s: &[f64],
    lam: &[f64],
    rc: &[f64],
) -> Option<Direction> {
    let n = pb.n;
    let mut rhs = vec![0.0; kkt.1.dim()];
    for i in 0..n {
        rhs[i] = -r.rd[i];
    }
    for k in 0..pb.ineq.len() {
        let c = (lam[k] * r.rp[k] - rc[k]) / s[k];
        for &(i, a) in &ev.g[k] {
            rhs[i] -= a * c;
        }
    }
    for (j, v) in r.re.iter().enumerate() {
        rhs[n + j] = -v;
    }
    let mut sol = kkt.0.solve(&rhs).ok()?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // Iterative refinement against the assembled matrix.
    let scale = inf_norm(&rhs).max(1.0);
    for _ in 0..REFINE_STEPS {
        let r: Vec<f64> = rhs.iter().zip(kkt.1.mul_vec(&sol)).map(|(b, k)| b - k).collect();
        if inf_norm(&r) <= 1e-14 * scale {
            break;
        }
        let d = kkt.0.solve(&r).ok()?;
        if d.iter().any(|v| !v.is_finite()) {
            break;
        }
        sol.iter_mut().zip(d).for_each(|(x, d)| *x += d);
    }
    let dy = sol[..n].to_vec();
    let dn = sol[n..n + pb.eq.len()].to_vec();
    let ds: Vec<f64> = (0..pb.ineq.len())
        .map(|k| -r.rp[k] - ev.g[k].iter().map(|&(i, a)| a * dy[i]).sum::<f64>())
        .collect();
    // Wide constraints take their multiplier step from the auxiliary unknown,
    // which keeps the dual residual consistent when lam/s is huge.
    let mut aux = n + pb.eq.len();
    let dl = (0..pb.ineq.len())
        .map(|k| {
            let plain = (-rc[k] - lam[k] * ds[k]) / s[k];
            if ev.g[k].len() <= WIDE {
                return plain;
            }
            let z = sol[aux];
            aux += 1;
            let c = &pb.ineq[k];
            let rho = lam[k] / s[k] - if c.is_affine() { 0.0 } else { lam[k] };
            if rho == 0.0 {
                return plain;
            }
            let gdy: f64 = ev.g[k].iter().map(|&(i, a)| a * dy[i]).sum();
            let curv = if c.is_affine() { 0.0 } else { lam[k] * gdy };
            (lam[k] * r.rp[k] - rc[k]) / s[k] + z + curv
        })
        .collect();
    Some(Direction { dy, ds, dl, dn })
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, &d)| d < 0.0).map(|(&x, &d)| -x / d).fold(f64::INFINITY, f64::min)
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + a * d).collect()
}

fn run(pb: &Problem, mut y: Vec<f64>, opts: &Options, label: &str) -> Outcome {
    let m = pb.ineq.len();
    let mut scratch = Scratch::default();
    let mut ev = evaluate(pb, &y, &mut scratch);
    let mut s: Vec<f64> = ev.f.iter().map(|&f| (-f).max(1.0)).collect();
    let mut lam = vec![1.0; m];
    let mut nu = vec![0.0; pb.eq.len()];
    let mut out = Outcome { status: Status::MaxIterations, y: y.clone(), iterations: 0, primal: f64::NAN, dual: f64::NAN, gap: f64::NAN };
    let merit = |r: &Residuals, s: &[f64], l: &[f64]| norm2(&r.rd) + norm2(&r.rp) + norm2(&r.re) + dot(s, l);

    let mut last_alpha = 0.0;
    for it in 0..=opts.max_iter {
        let r = residuals(pb, &y, &ev, &s, &lam, &nu);
        let primal = inf_norm(&r.rp).max(inf_norm(&r.re));
        let dual = inf_norm(&r.rd);
        let gap = dot(&s, &lam);
        out.y.clone_from(&y);
        out.iterations = it;
        out.primal = primal;
        out.dual = dual;
        out.gap = gap;
        if opts.verbose {
            eprintln!("{label} {it:3}  alpha {last_alpha:.1e}  obj {:+.9e}  primal {primal:.2e}  dual {dual:.2e}  gap {gap:.2e}", y[pb.target]);
        }
        let scale = 1.0 + inf_norm(&y);
        let dual_scale = 1.0 + inf_norm(&lam);
        if primal <= opts.feastol * scale && dual <= opts.feastol * dual_scale && gap <= opts.gaptol * scale {
            out.status = Status::Optimal;
            return out;
        }
        let near = primal <= REDUCED * scale && dual <= REDUCED * dual_scale && gap <= REDUCED * scale;
        if let Some(k) = pb.early_exit {
            let t = y[pb.target];
            if ev.f[..k].iter().all(|&f| f + t < 0.0) && inf_norm(&r.re) <= opts.feastol {
                out.y[pb.target] = ev.f[..k].iter().map(|&f| f + t).fold(f64::NEG_INFINITY, f64::max);
                out.status = Status::Optimal;
                return out;
            }
        }
        if it == opts.max_iter {
            break;
        }

        let Some(kkt) = factor(pb, &ev, &s, &lam) else {
            out.status = if near { Status::Optimal } else { Status::NumericalFailure };
            return out;
        };
        let mu = if m > 0 { gap / m as f64 } else { 0.0 };

        let rc_aff: Vec<f64> = s.iter().zip(&lam).map(|(a, b)| a * b).collect();
        let Some(aff) = direction(pb, &kkt, &ev, &r, &s, &lam, &rc_aff) else {
            out.status = Status::NumericalFailure;
            return out;
        };
        let a_aff = max_step(&s, &aff.ds).min(max_step(&lam, &aff.dl)).min(1.0);
        let mu_aff = if m > 0 {
            (0..m).map(|k| (s[k] + a_aff * aff.ds[k]) * (lam[k] + a_aff * aff.dl[k])).sum::<f64>() / m as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
        let rc: Vec<f64> = (0..m).map(|k| s[k] * lam[k] + aff.ds[k] * aff.dl[k] - sigma * mu).collect();
        let Some(mut d) = direction(pb, &kkt, &ev, &r, &s, &lam, &rc) else {
            out.status = Status::NumericalFailure;
            return out;
        };
        let theta = merit(&r, &s, &lam);
        // Directional derivative of the merit function along a Newton step with
        // complementarity target `rc`.
        let slope = |rc: &[f64]| -(norm2(&r.rd) + norm2(&r.rp) + norm2(&r.re)) - rc.iter().sum::<f64>();
        let boundary = |d: &Direction| (STEP_FRACTION * max_step(&s, &d.ds).min(max_step(&lam, &d.dl))).min(1.0);
        let mut alpha = if slope(&rc) < -1e-12 * theta { boundary(&d) } else { 0.0 };
        // A blocked or ascending corrector step falls back to plain centring directions.
        for sigma in [0.5, 1.0] {
            if alpha >= 0.1 {
                break;
            }
            let rc: Vec<f64> = (0..m).map(|k| s[k] * lam[k] - sigma * mu).collect();
            if let Some(c) = direction(pb, &kkt, &ev, &r, &s, &lam, &rc) {
                let a = boundary(&c);
                if a > alpha {
                    alpha = a;
                    d = c;
                }
            }
        }
        let mut accepted = None;
        for _ in 0..60 {
            let yn = axpy(&y, alpha, &d.dy);
            let evn = evaluate(pb, &yn, &mut scratch);
            if evn.f.iter().all(|v| v.is_finite()) {
                let (sn, ln, nn) = (axpy(&s, alpha, &d.ds), axpy(&lam, alpha, &d.dl), axpy(&nu, alpha, &d.dn));
                let rn = residuals(pb, &yn, &evn, &sn, &ln, &nn);
                let tn = merit(&rn, &sn, &ln);
                if tn.is_finite() && tn <= (1.0 - 1e-4 * alpha) * theta {
                    accepted = Some((yn, sn, ln, nn, evn));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((yn, sn, ln, nn, evn)) = accepted else {
            // Rounding floor: accept a point that meets the reduced tolerances.
            out.status = if near { Status::Optimal } else { Status::NumericalFailure };
            return out;
        };
        if near && alpha < 1e-6 {
            out.status = Status::Optimal;
            return out;
        }
        last_alpha = alpha;
        y = yn;
        s = sn;
        lam = ln;
        nu = nn;
        ev = evn;
    }
    out
}
