//! Acceptance gate for the planner and its harness: one test per shipping
//! criterion, named `criterion_<n>_...` so the harness emits a visible
//! pass/fail line for each. Every tolerance is stated at the assertion that
//! enforces it; run with `--nocapture` to see the measured values too.
//!
//! The two long-running criteria (2 and 3) drive the released binary at the
//! budgets they certify, so the whole file takes roughly twenty minutes on
//! one core.

use std::process::{Command, Output};
use std::time::Instant;

use ramcp::bench::{self, RandomModelSpec};
use ramcp::model::{self, HorizonSpec, Pomdp, PomdpParts};
use ramcp::oracle::{self, OracleError, OracleLimits};
use ramcp::risk::ExplicitTree;
use ramcp::sampler::RandomSource;
use ramcp::search::{SearchTree, SimContext};

/// Exact optima of the built-in `gamble` benchmark at threshold 1, risk
/// bound 2/3, and 20 steps; criterion 1 certifies them, criteria 2 and 7
/// consume them.
const FIXTURE_OPTIMUM: f64 = 813.3317820231117;
const FIXTURE_MIN_RISK: f64 = 0.5;
const FIXTURE_ALPHA: f64 = 2.0 / 3.0;

/// Master seed of the 500-trial evaluation batch in criterion 2. The
/// criterion's 5% band is about half a standard error of a 500-trial mean
/// wide, so the batch seed is pinned like every other experiment seed
/// rather than left to vary run to run.
const FIXTURE_BATCH_SEED: u64 = 0;

fn ramcp_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ramcp"))
        .args(args)
        .output()
        .expect("the binary launches")
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.code().is_some(),
        "the binary must exit normally, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

/// Trailing summary row of a `run` CSV: `(trials, avg_payoff,
/// empirical_risk, avg_stated_risk)`.
fn run_summary(csv: &str) -> (u64, f64, f64, f64) {
    let last = csv.lines().last().expect("a summary row");
    let f: Vec<&str> = last.split(',').collect();
    assert_eq!(f[0], "summary", "malformed run output: {last}");
    (
        f[1].parse().expect("trial count"),
        f[2].parse().expect("average payoff"),
        f[3].parse().expect("empirical risk"),
        f[4].parse().expect("average stated risk"),
    )
}

/// Data rows of a `sweep` CSV: `(alpha, trials, avg_payoff, empirical_risk,
/// avg_stated_risk, infeasible_fraction)`.
fn sweep_rows(csv: &str) -> Vec<(f64, u64, f64, f64, f64, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 6, "malformed sweep row: {l}");
            (
                f[0].parse().expect("alpha"),
                f[1].parse().expect("trials"),
                f[2].parse().expect("average payoff"),
                f[3].parse().expect("empirical risk"),
                f[4].parse().expect("average stated risk"),
                f[5].parse().expect("infeasible fraction"),
            )
        })
        .collect()
}

/// Three-sigma binomial fluctuation band for a frequency estimated from `n`
/// draws with success probability `p`.
fn three_sigma(p: f64, n: u64) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// The randomized-instance family shared by criteria 4, 5, and 7: three
/// states, two actions, two observations, every branch probability at least
/// 0.3, with the step count cycling through 2, 3, 4.
fn instance(seed: u64) -> (Pomdp, HorizonSpec) {
    let m = bench::gen_random_risky(&RandomModelSpec {
        seed,
        states: 3,
        actions: 2,
        observations: 2,
        ..Default::default()
    });
    (m, HorizonSpec::Steps(2 + (seed % 3) as u32))
}

/// Midpoint of the pathwise payoff range: a threshold some histories meet
/// and some miss whenever the range is nondegenerate.
fn mid_tau(m: &Pomdp, spec: HorizonSpec, limits: &OracleLimits) -> f64 {
    let (lo, hi) = oracle::payoff_range(m, spec, limits).unwrap();
    0.5 * (lo + hi)
}

#[test]
fn criterion_1_the_exact_solvers_reproduce_the_fixture_optima() {
    let start = Instant::now();
    let m = bench::by_name("gamble").expect("built-in benchmark");
    let spec = HorizonSpec::Steps(20);
    let limits = OracleLimits::default();

    let min_risk = oracle::exact_min_risk(&m, 1.0, spec, &limits).unwrap();
    let det = oracle::best_deterministic(&m, 1.0, FIXTURE_ALPHA, spec, &limits).unwrap();
    let sol = oracle::exact_eopg(&m, 1.0, FIXTURE_ALPHA, spec, &limits).unwrap();
    let elapsed = start.elapsed();

    assert!(
        (min_risk - FIXTURE_MIN_RISK).abs() <= 1e-9,
        "minimal risk {min_risk} is not {FIXTURE_MIN_RISK}"
    );
    assert!(
        (det - (-10.0)).abs() <= 0.01,
        "best deterministic value {det} is not -10 within 0.01"
    );
    assert!(
        (sol.value - 813.33).abs() <= 0.01,
        "constrained optimum {} is not 813.33 within 0.01",
        sol.value
    );
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "the exact solves took {elapsed:?}, over the one-second budget"
    );
    println!(
        "criterion 1: PASS — min risk {min_risk}, deterministic {det}, optimum {} in {elapsed:?}",
        sol.value
    );
}

#[test]
fn criterion_2_the_planner_attains_the_fixture_optimum_within_five_percent() {
    let out = ramcp_bin(&[
        "run",
        "--bench",
        "gamble",
        "--tau",
        "1",
        "--alpha",
        "0.6666666666666666",
        "--horizon",
        "20",
        "--budget-first",
        "200000sims",
        "--budget-step",
        "200000sims",
        "--trials",
        "500",
        "--seed",
        &FIXTURE_BATCH_SEED.to_string(),
    ]);
    let (trials, avg, risk, _) = run_summary(&stdout_of(&out));
    assert_eq!(trials, 500);
    let band = 0.05 * FIXTURE_OPTIMUM;
    assert!(
        (avg - FIXTURE_OPTIMUM).abs() <= band,
        "mean payoff {avg} misses the optimum {FIXTURE_OPTIMUM} by more than 5%"
    );
    let risk_cap = FIXTURE_ALPHA + three_sigma(FIXTURE_ALPHA, 500);
    assert!(
        risk <= risk_cap,
        "empirical risk {risk} exceeds the bound {FIXTURE_ALPHA} past three sigma ({risk_cap})"
    );
    println!(
        "criterion 2: PASS — mean payoff {avg} (optimum {FIXTURE_OPTIMUM} ± {band:.2}), \
         empirical risk {risk} ≤ {risk_cap:.4}"
    );
}

#[test]
fn criterion_3_certified_bounds_dominate_empirical_risk_at_every_budget() {
    let scenarios: [(&str, &str, &str, &str); 2] = [
        ("gamble", "1", "0.6666666666666666", "20"),
        ("hallway-3x3", "1", "0.6", "6"),
    ];
    for (bench_name, tau, alpha, horizon) in scenarios {
        for budget in ["100sims", "1000sims", "10000sims"] {
            let out = ramcp_bin(&[
                "run",
                "--bench",
                bench_name,
                "--tau",
                tau,
                "--alpha",
                alpha,
                "--horizon",
                horizon,
                "--budget-first",
                budget,
                "--budget-step",
                budget,
                "--trials",
                "1000",
                "--seed",
                "0",
            ]);
            let (trials, _, risk, stated) = run_summary(&stdout_of(&out));
            assert_eq!(trials, 1000);
            let cap = stated + three_sigma(stated, 1000);
            assert!(
                risk <= cap,
                "{bench_name} at {budget}: empirical risk {risk} exceeds the \
                 certified mean {stated} past three sigma ({cap})"
            );
            println!(
                "criterion 3: {bench_name} at {budget}: empirical {risk} ≤ {cap:.4} \
                 (certified mean {stated:.4})"
            );
        }
    }
    println!("criterion 3: PASS — certified bounds dominate at every budget");
}

#[test]
fn criterion_4_saturating_search_certifies_the_exact_minimal_risk() {
    let limits = OracleLimits::default();
    for seed in 0..20u64 {
        let (m, spec) = instance(seed);
        let tau = mid_tau(&m, spec, &limits);
        let exact = oracle::exact_min_risk(&m, tau, spec, &limits).unwrap();

        let (decisions, tau_eff) = spec.resolve(&m, tau);
        let (r_min, r_max) = m.reward_bounds();
        let k = 2.0 * (r_max - r_min) * decisions as f64;
        let sims = match decisions {
            ..=3 => 50_000,
            4 => 200_000,
            _ => 1_000_000,
        };
        let mut search = SearchTree::new(m.num_actions(), 0);
        let mut tree =
            ExplicitTree::new(&m, m.initial_belief(), tau_eff, decisions, &mut search).unwrap();
        let source = RandomSource::new(400 + seed);
        let mut stream = source.stream(&[1]);
        let mut ctx = SimContext::new(&m, &mut search, &mut tree, k);
        for _ in 0..sims {
            let s = stream.sample_state(m.initial_belief());
            ctx.simulate_from(s, &mut stream).unwrap();
        }
        drop(ctx);
        assert!(
            (tree.root_u() - exact).abs() <= 1e-9,
            "seed {seed}: certified {} vs exact {exact} after {sims} simulations",
            tree.root_u()
        );
    }
    println!("criterion 4: PASS — 20 instances certified to 1e-9");
}

#[test]
fn criterion_5_per_step_programs_match_the_exact_constrained_optimum() {
    let limits = OracleLimits::default();
    for seed in 0..20u64 {
        let (m, spec) = instance(seed);
        let tau = mid_tau(&m, spec, &limits);
        let (decisions, tau_eff) = spec.resolve(&m, tau);

        let mut search = SearchTree::new(m.num_actions(), 0);
        let mut tree =
            ExplicitTree::new(&m, m.initial_belief(), tau_eff, decisions, &mut search).unwrap();
        for h in oracle::safe_histories(&m, tau, spec, &limits).unwrap() {
            tree.insert_safe_path(&h, &mut search, &m).unwrap();
        }
        let exact_risk = oracle::exact_min_risk(&m, tau, spec, &limits).unwrap();
        assert!(
            (tree.root_u() - exact_risk).abs() <= 1e-9,
            "seed {seed}: complete tree bound {} vs exact {exact_risk}",
            tree.root_u()
        );

        // Exact continuation values at the frontier stand in for converged
        // payoff statistics.
        for node in 0..tree.len() as u32 {
            if !tree.is_expanded(node) {
                continue;
            }
            for e in tree.edges(node).to_vec() {
                let left = decisions - tree.depth(e.child);
                if tree.is_contentful(e.child) || left == 0 {
                    continue;
                }
                let v = oracle::belief_value_dp(&m, tree.belief(e.child), left, &limits).unwrap();
                tree.seed_action_value(e.child, 0, v);
            }
        }
        let alpha = (exact_risk + 0.2).min(1.0);
        let d = ramcp::cmdp::solve_decision(&tree, alpha).unwrap();
        let exact = oracle::exact_eopg(&m, tau, alpha, spec, &limits).unwrap();
        assert!(
            (d.value - exact.value).abs() <= 1e-6,
            "seed {seed}: per-step program {} vs exact {}",
            d.value,
            exact.value
        );
        assert!(d.claimed_risk <= alpha + ramcp::lp::FEAS_TOL);
    }
    println!("criterion 5: PASS — 20 instances matched to 1e-6");
}

#[test]
fn criterion_6_the_truncation_horizon_is_minimal_and_sound() {
    // Rewards spanning [-10, 100] under discount 0.95: the worst-case tail
    // after n kept steps is spread * 0.95^n / 0.05.
    let m = Pomdp::from_parts(PomdpParts {
        discount: 0.95,
        state_names: vec!["lean".into(), "rich".into()],
        action_names: vec!["stay".into()],
        obs_names: vec!["lean".into(), "rich".into()],
        transition: vec![1.0, 0.0, 0.0, 1.0],
        observation: vec![1.0, 0.0, 0.0, 1.0],
        reward: vec![-10.0, 100.0],
        initial_belief: vec![1.0, 0.0],
    })
    .unwrap();
    assert_eq!(m.validate(), Vec::new());

    let n = model::horizon_for_epsilon(&m, 1.0);
    assert_eq!(n, 164, "resolved horizon {n} is not the expected 164");
    let tail = |kept: i32| 110.0 * 0.95f64.powi(kept) / 0.05;
    assert!(tail(164) <= 0.5, "164 steps leave tail {}", tail(164));
    assert!(
        tail(163) > 0.5,
        "163 steps would already do: tail {}",
        tail(163)
    );

    let (decisions, tau_eff) = HorizonSpec::Epsilon(1.0).resolve(&m, 5.0);
    assert_eq!(decisions, 165, "an n-step horizon makes n+1 decisions");
    assert!(
        (tau_eff - 4.5).abs() <= 1e-12,
        "the threshold absorbs eps/2"
    );

    // One thousand random reward sequences: truncation at n steps moves the
    // discounted total by at most eps/2.
    let source = RandomSource::new(64);
    let mut stream = source.stream(&[1]);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let mut full = 0.0;
        let mut kept = 0.0;
        let mut disc = 1.0;
        for t in 0..2_000 {
            let u = (stream.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let r = -10.0 + 110.0 * u;
            full += disc * r;
            if t <= n {
                kept += disc * r;
            }
            disc *= 0.95;
        }
        worst = worst.max((full - kept).abs());
    }
    assert!(
        worst <= 0.5,
        "a truncated sequence drifted by {worst} > eps/2"
    );
    println!("criterion 6: PASS — horizon 164 minimal, worst drift {worst:.4} ≤ 0.5");
}

#[test]
fn criterion_7_randomization_beats_every_deterministic_policy() {
    let limits = OracleLimits::default();

    let gamble = bench::by_name("gamble").expect("built-in benchmark");
    let spec = HorizonSpec::Steps(20);
    let det = oracle::best_deterministic(&gamble, 1.0, FIXTURE_ALPHA, spec, &limits).unwrap();
    let sol = oracle::exact_eopg(&gamble, 1.0, FIXTURE_ALPHA, spec, &limits).unwrap();
    assert!(
        sol.value - det > 100.0,
        "the fixture's randomization gap {} is not over 100",
        sol.value - det
    );

    for seed in 0..20u64 {
        let (m, spec) = instance(seed);
        let tau = mid_tau(&m, spec, &limits);
        let exact_risk = oracle::exact_min_risk(&m, tau, spec, &limits).unwrap();
        let alpha = (exact_risk + 0.2).min(1.0);
        let rand = oracle::exact_eopg(&m, tau, alpha, spec, &limits)
            .unwrap()
            .value;
        match oracle::best_deterministic(&m, tau, alpha, spec, &limits) {
            Ok(det) => assert!(
                rand >= det - 1e-9,
                "seed {seed}: randomized {rand} falls below deterministic {det}"
            ),
            // A feasible randomized policy with no deterministic rival is
            // the strongest form of dominance.
            Err(OracleError::Infeasible) => {}
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
    println!(
        "criterion 7: PASS — fixture gap {:.2}, randomized ≥ deterministic on 20 instances",
        sol.value - det
    );
}

#[test]
fn criterion_8_sweep_rows_are_statistically_sound() {
    let out = ramcp_bin(&[
        "sweep",
        "--bench",
        "gamble",
        "--tau",
        "1",
        "--alphas",
        "0.5,0.7,1",
        "--horizon",
        "5",
        "--budget-first",
        "2000sims",
        "--budget-step",
        "1000sims",
        "--trials",
        "300",
        "--seed",
        "2",
    ]);
    let rows = sweep_rows(&stdout_of(&out));
    assert_eq!(rows.len(), 3);
    for &(alpha, trials, _, risk, stated, infeasible) in &rows {
        assert_eq!(trials, 300);
        assert!(
            stated >= alpha - 1e-12,
            "alpha {alpha}: the stated risk {stated} cannot undercut the budget"
        );
        let cap = stated + three_sigma(stated, trials);
        assert!(
            risk <= cap,
            "alpha {alpha}: empirical risk {risk} exceeds {stated} past three sigma"
        );
        if alpha == 1.0 {
            assert_eq!(infeasible, 0.0, "a vacuous bound can never be infeasible");
        }
    }

    // Over an unreachable threshold every certified bound is 1, so every
    // strict risk budget is infeasible from the first decision on.
    let out = ramcp_bin(&[
        "sweep",
        "--bench",
        "gamble",
        "--tau",
        "1000000",
        "--alphas",
        "0.3,0.7",
        "--horizon",
        "5",
        "--budget-first",
        "500sims",
        "--budget-step",
        "200sims",
        "--trials",
        "50",
        "--seed",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1), "infeasible everywhere exits 1");
    let rows = sweep_rows(&String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8"));
    assert_eq!(rows.len(), 2);
    for &(alpha, _, _, _, _, infeasible) in &rows {
        assert_eq!(
            infeasible, 1.0,
            "alpha {alpha}: an unreachable threshold must be flagged in every trial"
        );
    }
    println!("criterion 8: PASS — sweep rows sound, infeasibility flagged exactly");
}

#[test]
fn criterion_9_fixed_seeds_reproduce_identical_bytes() {
    for (bench_name, horizon, trials) in [("gamble", "5", "50"), ("hallway-3x3", "6", "30")] {
        let args = [
            "run",
            "--bench",
            bench_name,
            "--tau",
            "1",
            "--alpha",
            "0.8",
            "--horizon",
            horizon,
            "--budget-first",
            "1000sims",
            "--budget-step",
            "500sims",
            "--trials",
            trials,
            "--seed",
            "11",
        ];
        let first = stdout_of(&ramcp_bin(&args));
        let again = stdout_of(&ramcp_bin(&args));
        assert_eq!(first, again, "{bench_name}: reruns drifted");
        let mut threaded = args.to_vec();
        threaded.extend_from_slice(&["--jobs", "3"]);
        let parallel = stdout_of(&ramcp_bin(&threaded));
        assert_eq!(
            first, parallel,
            "{bench_name}: worker count changed the bytes"
        );
    }
    println!("criterion 9: PASS — byte-identical CSV across executions and worker counts");
}
