use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pmdp_gp::benchmarks;
use pmdp_gp::io::{parse_changeable, parse_model, parse_regions, parse_specs, write_model, SpecFile};
use pmdp_gp::model::Pmdp;
use pmdp_gp::scp::write_trace;
use pmdp_gp::tasks::{self, Config, ResultReport};

#[derive(Parser)]
#[command(name = "pmdp-gp", version, about = "Parameter synthesis for parametric Markov models via geometric programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find a parameter valuation and scheduler satisfying every spec.
    Feasible(Common),
    /// Maximise the reachability objective named in the spec file.
    Optimize(Common),
    /// Perturb a parameter-free model until its specs hold.
    Repair {
        #[command(flatten)]
        common: Common,
        /// File of `state action successor` lines that may be changed.
        #[arg(long)]
        changeable: Option<PathBuf>,
        /// Bound on the sum of squared repair multipliers (an unchanged transition has
        /// multiplier 1); solved as a single feasibility problem.
        #[arg(long)]
        cost_bound: Option<f64>,
    },
    /// Try to certify parameter boxes as unsafe.
    Region(Common),
    /// Write a bundled model to standard output.
    Example {
        #[arg(value_enum)]
        name: Example,
        /// Seed for the random generators.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parameters of the multi-dice model.
        #[arg(long, default_value_t = 2)]
        params: usize,
        /// States of the random models.
        #[arg(long, default_value_t = 20)]
        states: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    KyDie,
    MultiDice,
    BrpLike,
    RandomPmc,
    RandomPmdp,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    specs: PathBuf,
    /// Parameter box(es); overrides a region block in the spec file.
    #[arg(long)]
    region: Option<PathBuf>,
    /// Print only the JSON report.
    #[arg(long)]
    json: bool,
    /// CSV trace of the sequential convex programming iterations.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the (first) geometric program in readable form.
    #[arg(long)]
    dump_gp: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    feastol: f64,
    #[arg(long, default_value_t = 1e-8)]
    gaptol: f64,
    /// Interior-point iteration limit per phase.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Convergence tolerance of sequential convex programming.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Seed for sampled optimisation starting points.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra optimisation starting points when there are more than three
    /// parameters (with at most three, a fixed 3-level grid is used).
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Interior-point log on standard error.
    #[arg(long)]
    verbose: bool,
}

impl Common {
    fn config(&self) -> Config {
        let mut cfg = Config::default();
        cfg.gp.feastol = self.feastol;
        cfg.gp.gaptol = self.gaptol;
        cfg.gp.max_iter = self.max_iter;
        cfg.gp.verbose = self.verbose;
        cfg.scp.eps = self.eps;
        cfg.scp.gp = cfg.gp.clone();
        cfg.timeout = self.timeout.map(Duration::from_secs_f64);
        cfg.seed = self.seed;
        cfg.starts = self.starts;
        cfg
    }
}

/// Failure before any solver ran; exit code 2.
struct Usage(String);

fn read(path: &Path) -> Result<String, Usage> {
    fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn load(c: &Common) -> Result<(Pmdp, SpecFile), Usage> {
    let m = parse_model(&read(&c.model)?).map_err(|e| Usage(format!("{}: {e}", c.model.display())))?;
    let specs = parse_specs(&read(&c.specs)?, &m).map_err(|e| Usage(format!("{}: {e}", c.specs.display())))?;
    if let Some(t) = c.timeout {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Usage("--timeout must be positive".into()));
        }
    }
    Ok((m, specs))
}

fn regions(c: &Common, m: &Pmdp, sf: &SpecFile) -> Result<Vec<pmdp_gp::encoder::Region>, Usage> {
    match &c.region {
        Some(p) => parse_regions(&read(p)?, m).map_err(|e| Usage(format!("{}: {e}", p.display()))),
        None => Ok(sf.region.iter().cloned().collect()),
    }
}

fn run(cmd: Command) -> Result<(ResultReport, Common), Usage> {
    let task = |e: tasks::TaskError| Usage(e.to_string());
    match cmd {
        Command::Feasible(c) => {
            let (m, sf) = load(&c)?;
            let r = regions(&c, &m, &sf)?;
            if r.len() > 1 {
                return Err(Usage("feasible takes a single region box".into()));
            }
            let rep = tasks::cmd_feasible(&m, &sf.specs, r.first(), &c.config()).map_err(task)?;
            Ok((rep, c))
        }
        Command::Optimize(c) => {
            let (m, sf) = load(&c)?;
            let Some(goal) = sf.maximize.clone() else {
                return Err(Usage(format!("{}: no `maximize` line", c.specs.display())));
            };
            let r = regions(&c, &m, &sf)?;
            if r.len() > 1 {
                return Err(Usage("optimize takes a single region box".into()));
            }
            let rep = tasks::cmd_optimize(&m, &sf.specs, &goal, r.first(), &c.config()).map_err(task)?;
            Ok((rep, c))
        }
        Command::Repair { common: c, changeable, cost_bound } => {
            let (m, sf) = load(&c)?;
            let changes = match &changeable {
                Some(p) => parse_changeable(&read(p)?, &m).map_err(|e| Usage(format!("{}: {e}", p.display())))?,
                None => m
                    .choices
                    .iter()
                    .enumerate()
                    .flat_map(|(s, cs)| {
                        cs.iter().filter(|c| c.transitions.len() > 1).flat_map(move |c| {
                            c.transitions.iter().map(move |(t, _)| (s, c.action.clone(), *t))
                        })
                    })
                    .collect(),
            };
            let rep = tasks::cmd_repair(&m, &sf.specs, &changes, cost_bound, &c.config()).map_err(task)?;
            Ok((rep, c))
        }
        Command::Region(c) => {
            let (m, sf) = load(&c)?;
            let r = regions(&c, &m, &sf)?;
            if r.is_empty() {
                return Err(Usage("region needs --region FILE or a region block".into()));
            }
            let rep = tasks::cmd_region(&m, &sf.specs, &r, &c.config()).map_err(task)?;
            Ok((rep, c))
        }
        Command::Example { .. } => unreachable!("handled in main"),
    }
}

fn example(name: Example, seed: u64, params: usize, states: usize) -> Result<Pmdp, Usage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match name {
        Example::KyDie => benchmarks::ky_die(),
        Example::MultiDice => benchmarks::multi_dice(params).map_err(|e| Usage(e.to_string()))?,
        Example::BrpLike => benchmarks::brp_like(2, 2),
        Example::RandomPmc => benchmarks::random_pmc(&mut rng, states.max(4), 2),
        Example::RandomPmdp => benchmarks::random_pmdp(&mut rng, states.max(4), 2),
    })
}

fn summary(r: &ResultReport) -> String {
    let mut out = format!("{}: {:?}\n", r.command, r.status);
    if let Some(m) = &r.message {
        out += &format!("  {m}\n");
    }
    for (k, v) in &r.valuation {
        out += &format!("  {k} = {v:.6}\n");
    }
    for (s, w) in &r.scheduler {
        let parts: Vec<String> = w.iter().map(|(a, x)| format!("{a}:{x:.4}")).collect();
        out += &format!("  scheduler {s}: {}\n", parts.join(" "));
    }
    for s in &r.specs {
        let mark = if s.satisfied { "holds" } else { "VIOLATED" };
        out += &format!("  {}  value {:.9}  {mark}\n", s.property, s.value);
    }
    if let Some(o) = r.objective {
        out += &format!("  objective {o:.9}\n");
    }
    if let Some(c) = r.repair_cost {
        out += &format!("  repair cost {c:.6}\n");
    }
    if let Some(s) = &r.scp {
        out += &format!("  scp {:?} after {} steps ({} local programs)\n", s.status, s.iterations, s.local_programs);
    }
    for g in &r.regions {
        out += &format!("  box {}: {:?} ({:.3}s)\n", g.index, g.status, g.seconds);
    }
    if let Some(t) = r.timings.get("total") {
        out += &format!("  total {t:.3}s\n");
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Example { name, seed, params, states } = cli.command {
        return match example(name, seed, params, states) {
            Ok(m) => {
                print!("{}", write_model(&m));
                ExitCode::SUCCESS
            }
            Err(Usage(msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        };
    }
    let (report, c) = match run(cli.command) {
        Ok(x) => x,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Some(path) = &c.trace {
        if let Err(e) = fs::File::create(path).and_then(|f| write_trace(&report.trace, f)) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    if let Some(path) = &c.dump_gp {
        if let Err(e) = fs::write(path, report.gp_dump.as_deref().unwrap_or("")) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    if c.json {
        println!("{json}");
    } else {
        print!("{}", summary(&report));
    }
    ExitCode::from(report.exit_code() as u8)
}
