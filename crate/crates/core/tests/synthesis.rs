use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmdp_gp::analysis::check_pmdp;
use pmdp_gp::benchmarks::{ky_die, random_pmc, random_pmdp};
use pmdp_gp::encoder::Region;
use pmdp_gp::expr::{Valuation, Var};
use pmdp_gp::io::parse_model;
use pmdp_gp::model::{Pmdp, Scheduler, Spec, StateId};
use pmdp_gp::tasks::{cmd_feasible, cmd_optimize, cmd_region, cmd_repair, Config, ReportStatus};

/// Probability of the second die face: heads, then a tails/heads pair
/// escaping the `p q` loop, then tails.
fn die2(p: f64, q: f64) -> f64 {
    p * (1.0 - q) * (1.0 - p) / (1.0 - p * q)
}

fn param(m: &Pmdp, name: &str) -> Var {
    m.vars.get(name).unwrap()
}

fn fair_die() -> Pmdp {
    let die = ky_die();
    let u: Valuation = [(param(&die, "p"), 0.5), (param(&die, "q"), 0.5)].into_iter().collect();
    die.fixed(&u).unwrap()
}

fn coin_changes(m: &Pmdp) -> Vec<(StateId, String, StateId)> {
    (0..7).flat_map(|s| m.choices[s][0].transitions.iter().map(move |(t, _)| (s, "flip".to_string(), *t))).collect()
}

#[test]
fn die_feasibility_matches_closed_form() {
    let m = ky_die();
    let r = cmd_feasible(&m, &[Spec::reach(0.1, "die2", &m).unwrap()], None, &Config::default()).unwrap();
    assert_eq!(r.status, ReportStatus::Feasible);
    let u = r.u.unwrap();
    let (p, q) = (u.get(param(&m, "p")).unwrap(), u.get(param(&m, "q")).unwrap());
    assert!((r.specs[0].value - die2(p, q)).abs() < 1e-9);
    assert!(die2(p, q) <= 0.1);
}

#[test]
fn region_without_solutions_is_infeasible() {
    let m = ky_die();
    let (p, q) = (param(&m, "p"), param(&m, "q"));
    let grid: Vec<f64> = (0..=100).map(|i| 0.45 + 0.001 * i as f64).collect();
    let lowest = grid.iter().flat_map(|&a| grid.iter().map(move |&b| die2(a, b))).fold(f64::INFINITY, f64::min);
    assert!(lowest > 0.1);
    let region = Region { boxes: vec![(p, 0.45, 0.55), (q, 0.45, 0.55)], linear: Vec::new() };
    let spec = [Spec::reach(0.1, "die2", &m).unwrap()];
    let r = cmd_feasible(&m, &spec, Some(&region), &Config::default()).unwrap();
    assert_eq!(r.status, ReportStatus::Infeasible);
    assert_eq!(r.exit_code(), 1);
}

#[test]
fn certain_reachability_cannot_be_bounded() {
    let m = parse_model("pmc\nstates 2\ninitial 0\n0 go 1 1\n1 stay 1 1\nlabel goal 1\n").unwrap();
    let r = cmd_feasible(&m, &[Spec::reach(0.5, "goal", &m).unwrap()], None, &Config::default()).unwrap();
    assert_eq!(r.status, ReportStatus::Infeasible);
}

#[test]
fn degenerate_box_at_a_satisfying_point() {
    let m = ky_die();
    let (p, q) = (param(&m, "p"), param(&m, "q"));
    let region = Region { boxes: vec![(p, 0.5, 0.5), (q, 0.5, 0.5)], linear: Vec::new() };
    assert!(die2(0.5, 0.5) <= 0.2);
    let r = cmd_region(&m, &[Spec::reach(0.2, "die2", &m).unwrap()], &[region], &Config::default()).unwrap();
    assert_eq!(r.status, ReportStatus::Unknown);
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn one_parameter_optimum_sits_on_the_box() {
    // Goal probability p on a single coin: the maximum over [0.2, 0.7] is 0.7.
    let m = parse_model("pmc\nstates 3\ninitial 0\nparam p\n0 flip 1 p\n0 flip 2 1 - p\n1 stay 1 1\n2 stay 2 1\nlabel goal 1\n")
        .unwrap();
    let region = Region { boxes: vec![(param(&m, "p"), 0.2, 0.7)], linear: Vec::new() };
    let r = cmd_optimize(&m, &[], "goal", Some(&region), &Config::default()).unwrap();
    assert_eq!(r.status, ReportStatus::Optimized);
    assert!((r.objective.unwrap() - 0.7).abs() < 1e-3, "{:?}", r.objective);
}

#[test]
fn satisfied_repair_costs_nothing() {
    let m = fair_die();
    let r = cmd_repair(&m, &[Spec::reach(0.2, "die2", &m).unwrap()], &coin_changes(&m), None, &Config::default()).unwrap();
    assert_eq!(r.status, ReportStatus::Repaired);
    assert_eq!(r.repair_cost, Some(0.0));
}

#[test]
fn repair_needs_room_to_move() {
    let m = fair_die();
    let spec = [Spec::reach(0.125, "die2", &m).unwrap()];
    let cfg = Config::default();
    let none = cmd_repair(&m, &spec, &[], None, &cfg).unwrap();
    assert_eq!(none.status, ReportStatus::Infeasible);
    let zero = cmd_repair(&m, &spec, &coin_changes(&m), Some(0.0), &cfg).unwrap();
    assert_eq!(zero.status, ReportStatus::Infeasible);
    let free = cmd_repair(&m, &spec, &coin_changes(&m), None, &cfg).unwrap();
    assert_eq!(free.status, ReportStatus::Repaired);
    assert!(free.specs[0].value <= 0.125 && free.repair_cost.unwrap() > 0.0);
}

#[test]
fn optimisation_history_improves() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let m = random_pmc(&mut rng, 10, 2);
        let r = cmd_optimize(&m, &[], "goal", None, &Config::default()).unwrap();
        let scp = r.scp.unwrap();
        assert!(scp.history.windows(2).all(|w| w[1] >= w[0]), "{:?}", scp.history);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reported_values_match_a_fresh_check(seed in any::<u64>(), n in 5usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_pmdp(&mut rng, n, 2);
        let u: Valuation = m.vars.iter().map(|v| (v, rng.gen_range(0.2..0.8))).collect();
        let sched = Scheduler::uniform(&m.shape());
        let witness = check_pmdp(&m, &u, &sched, &[Spec::reach(1.0, "goal", &m).unwrap()]).unwrap()[0].value;
        prop_assume!(witness > 1e-6 && witness < 0.6);
        let specs = [Spec::reach(1.5 * witness, "goal", &m).unwrap()];
        let r = cmd_feasible(&m, &specs, None, &Config::default()).unwrap();
        prop_assume!(r.status == ReportStatus::Feasible);
        let fresh = check_pmdp(&m, r.u.as_ref().unwrap(), r.sched.as_ref().unwrap(), &specs).unwrap();
        for (a, b) in r.specs.iter().zip(&fresh) {
            prop_assert!((a.value - b.value).abs() <= 1e-9);
            prop_assert!(b.value <= 1.5 * witness);
        }
    }
}
