//! The four end-to-end workflows: feasibility, optimisation, repair and
//! region certification, each producing a [`ResultReport`].

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{check_pmdp, AnalysisError, SpecOutcome};
use crate::encoder::{
    add_cost_bound, add_region, convexify, encode_repair, encode_sgp, extract_solution, EncodeError, LiftingMap, Mode,
    Objective, Region, Repair, SignomialProgram,
};
use crate::expr::{Valuation, Var, VarKind};
use crate::gp::{self, to_convex, SolveResult};
use crate::model::{Pmdp, Scheduler, Spec, SpecKind, StateId};
use crate::scp::{self, Goal, ScpOptions, ScpStatus, TraceRow};

/// Relative slack allowed when checking region bounds on a reported valuation.
const REGION_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Config {
    pub gp: gp::Options,
    pub scp: ScpOptions,
    pub timeout: Option<Duration>,
    /// Extra starting points for optimisation beyond the relaxation's solution.
    pub starts: usize,
    /// Seed for sampled starting points.
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config { gp: gp::Options::default(), scp: ScpOptions::default(), timeout: None, starts: 8, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportStatus {
    Feasible,
    Optimized,
    Repaired,
    Infeasible,
    Unsafe,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpecValue {
    pub property: String,
    pub value: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GpSummary {
    pub status: gp::Status,
    pub variables: usize,
    pub inequalities: usize,
    pub equalities: usize,
    pub iterations: usize,
    pub phase1_iterations: usize,
    pub phase1_slack: Option<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScpSummary {
    pub status: ScpStatus,
    pub iterations: usize,
    pub local_programs: usize,
    /// Exact objective of every accepted iterate, starting point first.
    pub history: Vec<f64>,
    /// Runs started (optimisation only); the reported one is the best.
    pub starts: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionReport {
    pub index: usize,
    pub status: ReportStatus,
    pub gp: Option<GpSummary>,
    pub message: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultReport {
    pub command: &'static str,
    pub status: ReportStatus,
    pub message: Option<String>,
    pub valuation: BTreeMap<String, f64>,
    /// Weights of states with more than one enabled action.
    pub scheduler: BTreeMap<String, BTreeMap<String, f64>>,
    pub specs: Vec<SpecValue>,
    pub objective: Option<f64>,
    pub repair_cost: Option<f64>,
    pub gp: Option<GpSummary>,
    /// Set when the feasibility solution had to be restored by sequential convex programming.
    pub restoration: Option<ScpSummary>,
    pub scp: Option<ScpSummary>,
    pub regions: Vec<RegionReport>,
    pub timings: BTreeMap<&'static str, f64>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub gp_dump: Option<String>,
    #[serde(skip)]
    pub u: Option<Valuation>,
    #[serde(skip)]
    pub sched: Option<Scheduler>,
}

impl ResultReport {
    fn new(command: &'static str, status: ReportStatus) -> Self {
        ResultReport {
            command,
            status,
            message: None,
            valuation: BTreeMap::new(),
            scheduler: BTreeMap::new(),
            specs: Vec::new(),
            objective: None,
            repair_cost: None,
            gp: None,
            restoration: None,
            scp: None,
            regions: Vec::new(),
            timings: BTreeMap::new(),
            trace: Vec::new(),
            gp_dump: None,
            u: None,
            sched: None,
        }
    }

    fn with_message(mut self, msg: impl Into<String>) -> Self {
        self.message = Some(msg.into());
        self
    }

    /// Process exit code: 0 success, 1 infeasible or unsafe, 3 no conclusive answer.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            ReportStatus::Feasible | ReportStatus::Optimized | ReportStatus::Repaired => 0,
            ReportStatus::Infeasible | ReportStatus::Unsafe => 1,
            ReportStatus::Unknown if self.command == "region" => 0,
            ReportStatus::Unknown => 3,
        }
    }

    fn set_solution(&mut self, m: &Pmdp, specs: &[Spec], u: &Valuation, sched: &Scheduler) -> Result<(), TaskError> {
        let outcomes = check_pmdp(m, u, sched, specs)?;
        self.valuation = m.vars.iter().filter_map(|v| u.get(v).map(|x| (m.vars.name(v).to_string(), x))).collect();
        self.scheduler = m
            .choices
            .iter()
            .enumerate()
            .filter(|(_, cs)| cs.len() > 1)
            .map(|(s, cs)| {
                let w = cs.iter().zip(&sched.weights[s]).map(|(c, &w)| (c.action.clone(), w)).collect();
                (m.state_names[s].clone(), w)
            })
            .collect();
        self.specs = specs.iter().zip(&outcomes).map(|(s, o)| spec_value(s, o)).collect();
        self.u = Some(u.clone());
        self.sched = Some(sched.clone());
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Scp(#[from] scp::ScpError),
}

pub fn describe(spec: &Spec) -> String {
    let kind = match spec.kind {
        SpecKind::Reach => "reach",
        SpecKind::ExpectedCost => "expcost",
    };
    format!("{kind} <= {} label {}", spec.bound, spec.label)
}

fn spec_value(spec: &Spec, o: &SpecOutcome) -> SpecValue {
    SpecValue { property: describe(spec), value: o.value, satisfied: o.satisfied }
}

fn gp_summary(cf: &gp::ConvexForm, r: &SolveResult) -> GpSummary {
    GpSummary {
        status: r.status,
        variables: cf.num_vars(),
        inequalities: cf.inequalities.len(),
        equalities: cf.equalities.len(),
        iterations: r.iterations,
        phase1_iterations: r.phase1_iterations,
        phase1_slack: r.phase1_slack,
        objective: r.objective,
        primal_residual: r.primal_residual,
        dual_residual: r.dual_residual,
        gap: r.gap,
    }
}

fn scp_summary(s: &scp::ScpState) -> ScpSummary {
    ScpSummary { status: s.status, iterations: s.iterations, local_programs: s.trace.len(), history: s.history.clone(), starts: 1 }
}

pub fn in_region(region: &Region, u: &Valuation) -> bool {
    let boxes = region.boxes.iter().all(|&(v, lo, hi)| {
        u.get(v).is_some_and(|x| x >= lo * (1.0 - REGION_TOL) && x <= hi * (1.0 + REGION_TOL))
    });
    boxes && region.linear.iter().all(|(e, d)| e.evaluate(u).is_ok_and(|x| x <= d * (1.0 + REGION_TOL)))
}

fn all_satisfied(m: &Pmdp, specs: &[Spec], u: &Valuation, sched: &Scheduler) -> bool {
    check_pmdp(m, u, sched, specs).is_ok_and(|o| o.iter().all(|o| o.satisfied))
}

fn scp_options(cfg: &Config, start: Instant) -> ScpOptions {
    ScpOptions { gp: cfg.gp.clone(), deadline: cfg.timeout.map(|t| start + t), ..cfg.scp.clone() }
}

/// Outcome of solving the convexified program and mapping the result back.
struct Seed {
    gp: GpSummary,
    dump: String,
    status: gp::Status,
    point: Option<(Valuation, Scheduler)>,
    restoration: Option<ScpSummary>,
    solve_seconds: f64,
    restore_seconds: f64,
}

/// Solves the convexified program and, when its normalised solution misses a
/// specification, tries to restore feasibility by sequential convex programming.
fn seed(
    sgp: &SignomialProgram,
    lifting: &LiftingMap,
    mode: Mode,
    accept: &dyn Fn(&Valuation, &Scheduler) -> bool,
    cfg: &Config,
    start: Instant,
) -> Result<Seed, TaskError> {
    let clock = Instant::now();
    let program = convexify(sgp, lifting, mode)?;
    let cf = to_convex(&program);
    let res = gp::solve(&cf, &cfg.gp, None);
    let mut out = Seed {
        gp: gp_summary(&cf, &res),
        dump: program.dump(),
        status: res.status,
        point: None,
        restoration: None,
        solve_seconds: clock.elapsed().as_secs_f64(),
        restore_seconds: 0.0,
    };
    if res.status != gp::Status::Optimal {
        return Ok(out);
    }
    let Ok((u, sched)) = extract_solution(sgp, lifting, &res.x) else { return Ok(out) };
    if accept(&u, &sched) {
        out.point = Some((u, sched));
        return Ok(out);
    }
    let clock = Instant::now();
    if let Ok(state) = scp::run(sgp, lifting, &u, &sched, Goal::Restore, &scp_options(cfg, start)) {
        out.restoration = Some(scp_summary(&state));
        if accept(&state.u, &state.sched) {
            out.point = Some((state.u, state.sched));
        }
    }
    out.restore_seconds = clock.elapsed().as_secs_f64();
    Ok(out)
}

fn encode_or_report(
    command: &'static str,
    m: &Pmdp,
    specs: &[Spec],
    objective: Objective,
) -> Result<Result<SignomialProgram, ResultReport>, TaskError> {
    match encode_sgp(m, specs, objective) {
        Ok(sgp) => Ok(Ok(sgp)),
        Err(EncodeError::Infeasible(msg)) => Ok(Err(ResultReport::new(command, ReportStatus::Infeasible).with_message(msg))),
        Err(e) => Err(e.into()),
    }
}

fn status_message(status: gp::Status) -> String {
    format!("geometric program solver stopped with status {status:?}")
}

pub fn cmd_feasible(m: &Pmdp, specs: &[Spec], region: Option<&Region>, cfg: &Config) -> Result<ResultReport, TaskError> {
    let start = Instant::now();
    let mut sgp = match encode_or_report("feasible", m, specs, Objective::None)? {
        Ok(s) => s,
        Err(r) => return Ok(r),
    };
    if let Some(r) = region {
        add_region(&mut sgp, r)?;
    }
    let lifting = LiftingMap::build(&sgp)?;
    let encode_seconds = start.elapsed().as_secs_f64();
    let accept = |u: &Valuation, s: &Scheduler| all_satisfied(m, specs, u, s) && region.is_none_or(|r| in_region(r, u));
    let seed = match seed(&sgp, &lifting, Mode::Feasibility, &accept, cfg, start) {
        Err(TaskError::Encode(EncodeError::Infeasible(msg))) => {
            return Ok(ResultReport::new("feasible", ReportStatus::Infeasible).with_message(msg))
        }
        other => other?,
    };
    let mut report = ResultReport::new("feasible", ReportStatus::Unknown);
    report.timings.insert("encode", encode_seconds);
    report.timings.insert("solve", seed.solve_seconds);
    report.timings.insert("restore", seed.restore_seconds);
    report.gp = Some(seed.gp);
    report.gp_dump = Some(seed.dump);
    report.restoration = seed.restoration;
    match (seed.status, seed.point) {
        (gp::Status::Infeasible, _) => {
            report.status = ReportStatus::Infeasible;
            report.message = Some("the convex relaxation has no solution".into());
        }
        (_, Some((u, sched))) => {
            let clock = Instant::now();
            report.set_solution(m, specs, &u, &sched)?;
            report.status = ReportStatus::Feasible;
            report.timings.insert("check", clock.elapsed().as_secs_f64());
        }
        (gp::Status::Optimal, None) => {
            report.message = Some("the solution of the relaxation violates a property bound".into());
        }
        (status, None) => report.message = Some(status_message(status)),
    }
    report.timings.insert("total", start.elapsed().as_secs_f64());
    Ok(report)
}

pub fn cmd_optimize(
    m: &Pmdp,
    specs: &[Spec],
    maximize: &str,
    region: Option<&Region>,
    cfg: &Config,
) -> Result<ResultReport, TaskError> {
    let start = Instant::now();
    let target = m
        .label(maximize)
        .ok_or_else(|| EncodeError::BadObjective(format!("unknown label `{maximize}`")))?
        .clone();
    let mut sgp = match encode_or_report("optimize", m, specs, Objective::MaximizeReach(target))? {
        Ok(s) => s,
        Err(r) => return Ok(r),
    };
    if let Some(r) = region {
        add_region(&mut sgp, r)?;
    }
    let lifting = LiftingMap::build(&sgp)?;
    let encode_seconds = start.elapsed().as_secs_f64();
    let accept = |u: &Valuation, s: &Scheduler| all_satisfied(m, specs, u, s) && region.is_none_or(|r| in_region(r, u));
    let seed = match seed(&sgp, &lifting, Mode::Feasibility, &accept, cfg, start) {
        Err(TaskError::Encode(EncodeError::Infeasible(msg))) => {
            return Ok(ResultReport::new("optimize", ReportStatus::Infeasible).with_message(msg))
        }
        other => other?,
    };
    let mut report = ResultReport::new("optimize", ReportStatus::Unknown);
    report.timings.insert("encode", encode_seconds);
    report.timings.insert("solve", seed.solve_seconds);
    report.timings.insert("restore", seed.restore_seconds);
    report.gp = Some(seed.gp);
    report.gp_dump = Some(seed.dump);
    report.restoration = seed.restoration;
    let (u0, s0) = match (seed.status, seed.point) {
        (gp::Status::Infeasible, _) => {
            report.status = ReportStatus::Infeasible;
            report.message = Some("the convex relaxation has no solution".into());
            report.timings.insert("total", start.elapsed().as_secs_f64());
            return Ok(report);
        }
        (_, Some(p)) => p,
        (status, None) => {
            report.message = Some(if status == gp::Status::Optimal {
                "no feasible starting point found".into()
            } else {
                status_message(status)
            });
            report.timings.insert("total", start.elapsed().as_secs_f64());
            return Ok(report);
        }
    };
    let clock = Instant::now();
    let opts = scp_options(cfg, start);
    let mut state = scp::run(&sgp, &lifting, &u0, &s0, Goal::Objective, &opts)?;
    // SCP is local; further runs from spread-out feasible points guard
    // against a seed that sits on the wrong side of a valley.
    let mut runs = 1;
    for u in starting_points(m, region, cfg) {
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let sched = Scheduler::uniform(&m.shape());
        if !accept(&u, &sched) {
            continue;
        }
        let Ok(other) = scp::run(&sgp, &lifting, &u, &sched, Goal::Objective, &opts) else { continue };
        runs += 1;
        if other.objective < state.objective {
            state = other;
        }
    }
    report.timings.insert("scp", clock.elapsed().as_secs_f64());
    let (u, sched) = if region.is_none_or(|r| in_region(r, &state.u)) { (state.u.clone(), state.sched.clone()) } else { (u0, s0) };
    report.set_solution(m, specs, &u, &sched)?;
    let mc = crate::analysis::induced_chain(m, &u, &sched)?;
    let f = sgp.objective_family().expect("objective family");
    report.objective = Some(crate::analysis::reachability(&mc, &sgp.families[f].target)?[m.initial]);
    let mut summary = scp_summary(&state);
    summary.history = summary.history.iter().map(|x| 1.0 / x).collect();
    summary.starts = runs;
    report.scp = Some(summary);
    report.trace = state.trace;
    report.status = ReportStatus::Optimized;
    report.timings.insert("total", start.elapsed().as_secs_f64());
    Ok(report)
}

/// Levels 0.1, 0.5 and 0.9 of each parameter's range (its region box, else
/// the unit interval) for up to three parameters; uniform samples otherwise.
fn starting_points(m: &Pmdp, region: Option<&Region>, cfg: &Config) -> Vec<Valuation> {
    let params: Vec<Var> = m.vars.of_kind(VarKind::Parameter).collect();
    if params.is_empty() || cfg.starts == 0 {
        return Vec::new();
    }
    let range = |v: Var| {
        region.and_then(|r| r.boxes.iter().find(|b| b.0 == v)).map_or((0.0, 1.0), |&(_, lo, hi)| (lo, hi))
    };
    let mut out = Vec::new();
    if params.len() <= 3 {
        let levels = [0.1, 0.5, 0.9];
        let total = levels.len().pow(params.len() as u32);
        for mut code in 0..total {
            let mut u = Valuation::new();
            for &v in &params {
                let (lo, hi) = range(v);
                let _ = u.insert(v, lo + (hi - lo) * levels[code % levels.len()]);
                code /= levels.len();
            }
            out.push(u);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.starts {
            let mut u = Valuation::new();
            for &v in &params {
                let (lo, hi) = range(v);
                let _ = u.insert(v, lo + (hi - lo) * rng.gen_range(0.05..0.95));
            }
            out.push(u);
        }
    }
    out
}

fn repair_report(
    m: &Pmdp,
    specs: &[Spec],
    repaired: &Pmdp,
    repair: &Repair,
    u: &Valuation,
    sched: &Scheduler,
) -> Result<ResultReport, TaskError> {
    let mut report = ResultReport::new("repair", ReportStatus::Repaired);
    report.set_solution(repaired, specs, u, sched)?;
    let cost = repair.cost(u);
    report.repair_cost = Some(cost);
    report.objective = Some(cost);
    // Report the repaired probabilities rather than the multipliers.
    report.valuation = repair
        .entries
        .iter()
        .map(|&(v, s, i, t, a)| {
            let name = format!("{} {} {}", m.state_names[s], m.choices[s][i].action, m.state_names[t]);
            (name, a * u.get(v).unwrap_or(1.0))
        })
        .collect();
    Ok(report)
}

pub fn cmd_repair(
    m: &Pmdp,
    specs: &[Spec],
    changeable: &[(StateId, String, StateId)],
    cost_bound: Option<f64>,
    cfg: &Config,
) -> Result<ResultReport, TaskError> {
    let start = Instant::now();
    if m.choices.iter().flatten().any(|c| !c.is_constant()) {
        return Err(EncodeError::BadRepair("model must be parameter-free".into()).into());
    }
    // Specifications that already hold need no repair.
    let original = cmd_feasible(m, specs, None, cfg)?;
    if original.status == ReportStatus::Feasible {
        let mut report = ResultReport::new("repair", ReportStatus::Repaired).with_message("specifications already hold");
        if let (Some(u), Some(s)) = (&original.u, &original.sched) {
            report.set_solution(m, specs, u, s)?;
        }
        report.repair_cost = Some(0.0);
        report.objective = Some(0.0);
        report.timings.insert("total", start.elapsed().as_secs_f64());
        return Ok(report);
    }
    if changeable.is_empty() {
        return Ok(ResultReport::new("repair", ReportStatus::Infeasible)
            .with_message("specifications are violated and no transition may change"));
    }
    if let Some(b) = cost_bound {
        if !(b > 0.0) {
            return Ok(ResultReport::new("repair", ReportStatus::Infeasible)
                .with_message(format!("cost bound {b} admits no change")));
        }
    }
    let (repaired, mut sgp, repair) = encode_repair(m, specs, changeable)?;
    if let Some(b) = cost_bound {
        add_cost_bound(&mut sgp, &repair, b)?;
    }
    let lifting = LiftingMap::build(&sgp)?;
    let encode_seconds = start.elapsed().as_secs_f64();
    let squares = repair.squares();
    let within_bound = |u: &Valuation| cost_bound.is_none_or(|b| squares.evaluate(u).is_ok_and(|x| x <= b));
    let accept = |u: &Valuation, s: &Scheduler| all_satisfied(&repaired, specs, u, s) && within_bound(u);
    let mode = if cost_bound.is_some() { Mode::Feasibility } else { Mode::Objective };
    let seed = match seed(&sgp, &lifting, mode, &accept, cfg, start) {
        Err(TaskError::Encode(EncodeError::Infeasible(msg))) => {
            return Ok(ResultReport::new("repair", ReportStatus::Infeasible).with_message(msg))
        }
        other => other?,
    };
    let finish = |mut r: ResultReport, seed: &Seed| {
        r.timings.insert("encode", encode_seconds);
        r.timings.insert("solve", seed.solve_seconds);
        r.timings.insert("restore", seed.restore_seconds);
        r.gp = Some(seed.gp.clone());
        r.gp_dump = Some(seed.dump.clone());
        r.restoration = seed.restoration.clone();
        r
    };
    let (u0, s0) = match (seed.status, seed.point.clone()) {
        (gp::Status::Infeasible, _) => {
            let r = ResultReport::new("repair", ReportStatus::Infeasible).with_message("the convex relaxation has no solution");
            return Ok(finish(r, &seed));
        }
        (_, Some(p)) => p,
        (status, None) => {
            let msg = if status == gp::Status::Optimal { "no repair found".into() } else { status_message(status) };
            return Ok(finish(ResultReport::new("repair", ReportStatus::Unknown).with_message(msg), &seed));
        }
    };
    if cost_bound.is_some() {
        let mut r = finish(repair_report(m, specs, &repaired, &repair, &u0, &s0)?, &seed);
        r.timings.insert("total", start.elapsed().as_secs_f64());
        return Ok(r);
    }
    let clock = Instant::now();
    let state = scp::run(&sgp, &lifting, &u0, &s0, Goal::Objective, &scp_options(cfg, start))?;
    let mut r = finish(repair_report(m, specs, &repaired, &repair, &state.u, &state.sched)?, &seed);
    r.timings.insert("scp", clock.elapsed().as_secs_f64());
    r.scp = Some(scp_summary(&state));
    r.trace = state.trace;
    r.timings.insert("total", start.elapsed().as_secs_f64());
    Ok(r)
}

fn certify(m: &Pmdp, specs: &[Spec], region: &Region, cfg: &Config) -> Result<(ReportStatus, Option<GpSummary>, Option<String>), TaskError> {
    let mut sgp = match encode_sgp(m, specs, Objective::None) {
        Ok(s) => s,
        Err(EncodeError::Infeasible(msg)) => return Ok((ReportStatus::Unsafe, None, Some(msg))),
        Err(e) => return Err(e.into()),
    };
    add_region(&mut sgp, region)?;
    let lifting = LiftingMap::build(&sgp)?;
    let program = match convexify(&sgp, &lifting, Mode::Feasibility) {
        Ok(p) => p,
        Err(EncodeError::Infeasible(msg)) => return Ok((ReportStatus::Unsafe, None, Some(msg))),
        Err(e) => return Err(e.into()),
    };
    let cf = to_convex(&program);
    let res = gp::solve(&cf, &cfg.gp, None);
    let summary = gp_summary(&cf, &res);
    Ok(match res.status {
        gp::Status::Infeasible => (ReportStatus::Unsafe, Some(summary), None),
        gp::Status::Optimal => (ReportStatus::Unknown, Some(summary), None),
        s => (ReportStatus::Unknown, Some(summary), Some(status_message(s))),
    })
}

/// Certifies each region unsafe when the relaxation restricted to it is infeasible.
pub fn cmd_region(m: &Pmdp, specs: &[Spec], regions: &[Region], cfg: &Config) -> Result<ResultReport, TaskError> {
    let start = Instant::now();
    let deadline = cfg.timeout.map(|t| start + t);
    let results: Vec<Result<RegionReport, TaskError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = regions
            .iter()
            .enumerate()
            .map(|(index, region)| {
                scope.spawn(move || {
                    let clock = Instant::now();
                    if deadline.is_some_and(|d| clock >= d) {
                        return Ok(RegionReport {
                            index,
                            status: ReportStatus::Unknown,
                            gp: None,
                            message: Some("timeout".into()),
                            seconds: 0.0,
                        });
                    }
                    let (status, gp, message) = certify(m, specs, region, cfg)?;
                    Ok(RegionReport { index, status, gp, message, seconds: clock.elapsed().as_secs_f64() })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("region worker panicked")).collect()
    });
    let mut report = ResultReport::new("region", ReportStatus::Unknown);
    for r in results {
        report.regions.push(r?);
    }
    if !report.regions.is_empty() && report.regions.iter().all(|r| r.status == ReportStatus::Unsafe) {
        report.status = ReportStatus::Unsafe;
    }
    report.timings.insert("total", start.elapsed().as_secs_f64());
    Ok(report)
}
