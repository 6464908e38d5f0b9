//! Experiment harness for the risk-aware planner.
//!
//! Three subcommands drive the `ramcp` library:
//!
//! - `run`: repeated independent planning trials against the model's own
//!   simulator, one CSV row per trial plus a trailing summary row.
//! - `sweep`: one trial batch per risk bound, one CSV summary row per bound.
//! - `oracle`: exact small-instance optima printed as a text report.
//!
//! CSV goes to standard output (or `--out FILE`); diagnostics go to standard
//! error. With a fixed `--seed` and simulation-count budgets the CSV bytes
//! are identical across invocations and across `--jobs` settings.
//!
//! The `run` CSV has columns `trial, seed, payoff, safe, stated_risk, modes,
//! steps, wall_ms`, where `modes` run-length-encodes the per-step decision
//! modes (`C` constrained program, `R` risk-minimizing fallback, `U`
//! unconstrained), e.g. `C3R2U16`. The final record carries `summary` in the
//! trial column, the trial count in the seed column, and `avg_payoff`,
//! `empirical_risk`, `avg_stated_risk` in the next three columns.
//!
//! Exit codes: 0 success, 1 no feasible solution found anywhere (every trial
//! of every batch started with a certified risk bound above its budget, or
//! the oracle proved infeasibility), 2 usage, model, or runtime errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ramcp::agent::{self, AgentConfig, AgentError, Budget, BudgetSchedule, TrialRecord};
use ramcp::bench;
use ramcp::cmdp::Mode;
use ramcp::model::{HorizonSpec, Pomdp};
use ramcp::oracle::{self, OracleError, OracleLimits};
use ramcp::risk::ExplicitTree;
use ramcp::sampler::RandomSource;
use ramcp::search::{SearchTree, SimContext};
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "ramcp",
    version,
    about = "Risk-aware online POMDP planning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated planning trials and emit per-trial CSV rows
    Run(RunArgs),
    /// Run one trial batch per risk bound and emit per-bound summary rows
    Sweep(SweepArgs),
    /// Solve a small instance exactly and print the optima
    Oracle(OracleArgs),
}

/// Where the model comes from: exactly one source must be given.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelArgs {
    /// Model description file (line-oriented text; see the library docs)
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Built-in benchmark: tiger, gamble, hallway-3x3, hallway-3x3-mdp
    #[arg(long, value_name = "NAME")]
    bench: Option<String>,
}

/// How far ahead payoffs are counted: exactly one form must be given.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct HorizonArgs {
    /// Steps after the first decision (a trial makes N+1 decisions)
    #[arg(long, value_name = "N")]
    horizon: Option<u32>,
    /// Infinite-horizon accuracy: truncate where the payoff error is at most
    /// EPS/2 and judge safety against tau - EPS/2
    #[arg(long, value_name = "EPS")]
    epsilon: Option<f64>,
}

impl HorizonArgs {
    fn spec(&self) -> HorizonSpec {
        match (self.horizon, self.epsilon) {
            (Some(n), None) => HorizonSpec::Steps(n),
            (None, Some(e)) => HorizonSpec::Epsilon(e),
            _ => unreachable!("the argument group admits exactly one"),
        }
    }
}

/// Flags shared by the trial-running subcommands.
#[derive(Args)]
struct TrialArgs {
    /// Payoff threshold the probabilistic guarantee protects
    #[arg(long)]
    tau: f64,
    /// Planning effort for the first decision ("5000ms" or "200sims")
    #[arg(long, value_name = "BUDGET", default_value = "5000ms", value_parser = parse_budget)]
    budget_first: Budget,
    /// Planning effort for each later decision
    #[arg(long, value_name = "BUDGET", default_value = "100ms", value_parser = parse_budget)]
    budget_step: Budget,
    /// Number of independent trials
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Master seed; every stream a trial consumes derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; rows are emitted in trial order regardless
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the CSV here instead of standard output
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// UCB exploration constant (default: twice the payoff spread)
    #[arg(long)]
    k: Option<f64>,
    /// Root-resampling particle pool size (0 disables pooling)
    #[arg(long, default_value_t = 0)]
    particle_cap: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[command(flatten)]
    trial: TrialArgs,
    /// Largest acceptable probability of a payoff below the threshold
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Print the first planning phase's recorded tree to standard error
    #[arg(long)]
    dump_tree: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[command(flatten)]
    trial: TrialArgs,
    /// Comma-separated risk bounds, one summary row each
    #[arg(long, value_delimiter = ',', required = true, value_name = "A,B,...")]
    alphas: Vec<f64>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Payoff threshold the probabilistic guarantee protects
    #[arg(long)]
    tau: f64,
    /// Largest acceptable probability of a payoff below the threshold
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ramcp::model::ParseError,
    },
    #[error("unknown benchmark '{name}' (available: {available})")]
    UnknownBench { name: String, available: String },
    #[error("risk bound {0} is outside [0, 1]")]
    BadAlpha(f64),
    #[error("model does not satisfy the planner's assumptions:\n{0}")]
    Invalid(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    let (digits, build): (&str, fn(u64) -> Budget) = if let Some(d) = s.strip_suffix("sims") {
        (d, Budget::Sims)
    } else if let Some(d) = s.strip_suffix("ms") {
        (d, Budget::Millis)
    } else {
        return Err(format!(
            "'{s}' is not a budget; expected a count with a unit, like 5000ms or 200sims"
        ));
    };
    digits.parse::<u64>().map(build).map_err(|_| {
        format!(
            "'{digits}' is not a whole number of {}",
            if s.ends_with("sims") {
                "simulations"
            } else {
                "milliseconds"
            }
        )
    })
}

fn load_model(args: &ModelArgs) -> Result<(Pomdp, String), CliError> {
    if let Some(name) = &args.bench {
        let m = bench::by_name(name).ok_or_else(|| CliError::UnknownBench {
            name: name.clone(),
            available: bench::builtin_names().join(", "),
        })?;
        return Ok((m, name.clone()));
    }
    let path = args
        .model
        .clone()
        .expect("the argument group admits exactly one");
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let model = ramcp::model::parse_model(&text).map_err(|source| CliError::Parse {
        path: path.clone(),
        source,
    })?;
    let violations = model.validate();
    if !violations.is_empty() {
        let list = violations
            .iter()
            .map(|v| format!("  - {v}"))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(CliError::Invalid(list));
    }
    Ok((model, path.display().to_string()))
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(CliError::BadAlpha(alpha))
    }
}

fn config_from(trial: &TrialArgs, horizon: &HorizonArgs, alpha: f64) -> AgentConfig {
    AgentConfig {
        tau: trial.tau,
        alpha,
        horizon: horizon.spec(),
        budget: BudgetSchedule {
            first: trial.budget_first,
            step: trial.budget_step,
        },
        k: trial.k,
        particle_cap: trial.particle_cap,
    }
}

/// Runs `trials` independent trials, optionally on a worker pool. Trial `t`
/// only ever consumes streams derived from `(seed, t)`, so the records are
/// identical however the work is scheduled.
fn run_batch(
    model: &Pomdp,
    config: &AgentConfig,
    seed: u64,
    trials: u64,
    jobs: usize,
) -> Result<Vec<TrialRecord>, AgentError> {
    let source = RandomSource::new(seed);
    let jobs = jobs.clamp(1, trials.clamp(1, 64) as usize);
    if jobs == 1 {
        return (0..trials)
            .map(|t| agent::run_trial(model, config, &source, t))
            .collect();
    }
    let next = AtomicU64::new(0);
    let done: Mutex<Vec<(u64, Result<TrialRecord, AgentError>)>> =
        Mutex::new(Vec::with_capacity(trials as usize));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= trials {
                    break;
                }
                let r = agent::run_trial(model, config, &source, t);
                let failed = r.is_err();
                done.lock().unwrap().push((t, r));
                if failed {
                    break;
                }
            });
        }
    });
    let mut rows = done.into_inner().unwrap();
    rows.sort_by_key(|&(t, _)| t);
    rows.into_iter().map(|(_, r)| r).collect()
}

/// Run-length encoding of per-step decision modes, e.g. `C3R2U16`.
fn mode_rle(modes: &[Mode]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < modes.len() {
        let tag = modes[i].tag();
        let mut j = i + 1;
        while j < modes.len() && modes[j].tag() == tag {
            j += 1;
        }
        let _ = write!(out, "{tag}{}", j - i);
        i = j;
    }
    out
}

struct Summary {
    trials: u64,
    avg_payoff: f64,
    empirical_risk: f64,
    avg_stated_risk: f64,
    infeasible_fraction: f64,
}

fn summarize(records: &[TrialRecord], alpha: f64) -> Summary {
    let n = records.len();
    if n == 0 {
        return Summary {
            trials: 0,
            avg_payoff: 0.0,
            empirical_risk: 0.0,
            avg_stated_risk: 0.0,
            infeasible_fraction: 0.0,
        };
    }
    let nf = n as f64;
    Summary {
        trials: n as u64,
        avg_payoff: records.iter().map(|r| r.payoff).sum::<f64>() / nf,
        empirical_risk: records.iter().filter(|r| !r.safe).count() as f64 / nf,
        avg_stated_risk: records.iter().map(|r| r.stated_risk).sum::<f64>() / nf,
        infeasible_fraction: records.iter().filter(|r| r.first_root_u > alpha).count() as f64 / nf,
    }
}

const RUN_HEADER: &str = "trial,seed,payoff,safe,stated_risk,modes,steps,wall_ms";
const SWEEP_HEADER: &str =
    "alpha,trials,avg_payoff,empirical_risk,avg_stated_risk,infeasible_fraction";

fn render_run_csv(records: &[TrialRecord], summary: &Summary) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 2));
    out.push_str(RUN_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.payoff,
            r.safe,
            r.stated_risk,
            mode_rle(&r.modes),
            r.steps,
            r.wall_ms
        );
    }
    let _ = writeln!(
        out,
        "summary,{},{},{},{},,,",
        summary.trials, summary.avg_payoff, summary.empirical_risk, summary.avg_stated_risk
    );
    out
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, CliError> {
    check_alpha(args.alpha)?;
    let (model, _) = load_model(&args.model)?;
    let config = config_from(&args.trial, &args.horizon, args.alpha);
    if args.dump_tree {
        dump_first_phase(&model, &config, args.trial.seed)?;
    }
    let records = run_batch(
        &model,
        &config,
        args.trial.seed,
        args.trial.trials,
        args.trial.jobs,
    )?;
    let summary = summarize(&records, args.alpha);
    write_out(&args.trial.out, &render_run_csv(&records, &summary))?;
    let all_infeasible = !records.is_empty() && summary.infeasible_fraction >= 1.0;
    Ok(if all_infeasible {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, CliError> {
    for &alpha in &args.alphas {
        check_alpha(alpha)?;
    }
    let (model, _) = load_model(&args.model)?;
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let mut all_infeasible = true;
    for &alpha in &args.alphas {
        let config = config_from(&args.trial, &args.horizon, alpha);
        let records = run_batch(
            &model,
            &config,
            args.trial.seed,
            args.trial.trials,
            args.trial.jobs,
        )?;
        let s = summarize(&records, alpha);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            alpha,
            s.trials,
            s.avg_payoff,
            s.empirical_risk,
            s.avg_stated_risk,
            s.infeasible_fraction
        );
        if records.is_empty() || s.infeasible_fraction < 1.0 {
            all_infeasible = false;
        }
    }
    write_out(&args.trial.out, &out)?;
    Ok(if all_infeasible {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode, CliError> {
    check_alpha(args.alpha)?;
    let (model, name) = load_model(&args.model)?;
    let spec = args.horizon.spec();
    let limits = OracleLimits::default();
    let (decisions, tau_eff) = spec.resolve(&model, args.tau);

    let mut report = String::new();
    let _ = writeln!(
        report,
        "model: {name} ({} states, {} actions, {} observations)",
        model.num_states(),
        model.num_actions(),
        model.num_observations()
    );
    let _ = writeln!(report, "decisions: {decisions}");
    let _ = writeln!(report, "threshold: {tau_eff}");
    let _ = writeln!(report, "risk bound: {}", args.alpha);
    let (lo, hi) = oracle::payoff_range(&model, spec, &limits)?;
    let _ = writeln!(report, "payoff range: [{lo}, {hi}]");
    let min_risk = oracle::exact_min_risk(&model, args.tau, spec, &limits)?;
    let _ = writeln!(report, "minimal risk: {min_risk}");
    match oracle::best_deterministic(&model, args.tau, args.alpha, spec, &limits) {
        Ok(v) => {
            let _ = writeln!(report, "best deterministic value: {v}");
        }
        Err(OracleError::Infeasible) => {
            let _ = writeln!(report, "best deterministic value: infeasible");
        }
        Err(e) => return Err(e.into()),
    }
    let feasible = match oracle::exact_eopg(&model, args.tau, args.alpha, spec, &limits) {
        Ok(sol) => {
            let _ = writeln!(report, "optimum: {}", sol.value);
            let dist = model
                .actions()
                .zip(&sol.root_distribution)
                .filter(|&(_, &p)| p > 1e-12)
                .map(|(a, p)| format!("{}:{p}", model.action_name(a)))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(report, "root action distribution: {dist}");
            let _ = writeln!(report, "verdict: feasible");
            true
        }
        Err(OracleError::Infeasible) => {
            let _ = writeln!(report, "verdict: infeasible");
            false
        }
        Err(e) => return Err(e.into()),
    };
    print!("{report}");
    Ok(if feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Replays the first planning phase on the initial belief and prints the
/// recorded tree, so a run's starting point can be inspected.
fn dump_first_phase(model: &Pomdp, config: &AgentConfig, seed: u64) -> Result<(), CliError> {
    let (decisions, tau_eff) = config.horizon.resolve(model, config.tau);
    let (r_min, r_max) = model.reward_bounds();
    let k = config.k.unwrap_or(2.0 * (r_max - r_min) * decisions as f64);
    let mut search = SearchTree::new(model.num_actions(), config.particle_cap);
    let mut tree = ExplicitTree::new(
        model,
        model.initial_belief(),
        tau_eff,
        decisions,
        &mut search,
    )
    .map_err(AgentError::from)?;
    let source = RandomSource::new(seed);
    let mut stream = source.stream(&[2, 0, 0]);
    let started = Instant::now();
    let mut sims = 0u64;
    let mut ctx = SimContext::new(model, &mut search, &mut tree, k);
    loop {
        let s = stream.sample_state(model.initial_belief());
        ctx.simulate_from(s, &mut stream)
            .map_err(AgentError::from)?;
        sims += 1;
        let exhausted = match config.budget.first {
            Budget::Sims(n) => sims >= n,
            Budget::Millis(ms) => started.elapsed().as_millis() as u64 >= ms,
        };
        if exhausted {
            break;
        }
    }
    drop(ctx);
    eprintln!(
        "first planning phase: {sims} simulations, root risk bound {}",
        tree.root_u()
    );
    eprint!("{}", tree.dump(model));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budgets_parse_with_their_units() {
        assert_eq!(parse_budget("5000ms"), Ok(Budget::Millis(5000)));
        assert_eq!(parse_budget("200sims"), Ok(Budget::Sims(200)));
        assert!(parse_budget("200").is_err());
        assert!(parse_budget("fastms").is_err());
        assert!(parse_budget("1.5sims").is_err());
    }

    #[test]
    fn mode_runs_are_length_encoded() {
        use Mode::{Constrained as C, RiskMinimizing as R, Unconstrained as U};
        assert_eq!(mode_rle(&[]), "");
        assert_eq!(mode_rle(&[U]), "U1");
        assert_eq!(mode_rle(&[C, C, C, R, R, U]), "C3R2U1");
        assert_eq!(mode_rle(&[C, U, C]), "C1U1C1");
    }

    #[test]
    fn an_empty_batch_summarizes_to_zeros() {
        let s = summarize(&[], 0.5);
        assert_eq!(s.trials, 0);
        assert_eq!(s.avg_payoff, 0.0);
        assert_eq!(s.empirical_risk, 0.0);
        assert_eq!(s.avg_stated_risk, 0.0);
        assert_eq!(s.infeasible_fraction, 0.0);
        let csv = render_run_csv(&[], &s);
        assert_eq!(csv, format!("{RUN_HEADER}\nsummary,0,0,0,0,,,\n"));
        assert!(!csv.contains("NaN"));
    }

    #[test]
    fn summaries_average_the_rows() {
        let rec = |payoff: f64, safe: bool, u: f64, stated: f64| TrialRecord {
            trial: 0,
            seed: 0,
            payoff,
            safe,
            first_root_u: u,
            stated_risk: stated,
            modes: vec![Mode::Unconstrained],
            rbounds: vec![1.0],
            steps: 1,
            sims: 1,
            wall_ms: 0,
        };
        let records = vec![
            rec(10.0, true, 0.2, 0.5),
            rec(-10.0, false, 0.8, 0.8),
            rec(30.0, true, 0.2, 0.5),
            rec(10.0, false, 0.2, 0.5),
        ];
        let s = summarize(&records, 0.5);
        assert_eq!(s.trials, 4);
        assert_eq!(s.avg_payoff, 10.0);
        assert_eq!(s.empirical_risk, 0.5);
        assert!((s.avg_stated_risk - 0.575).abs() < 1e-12);
        assert_eq!(s.infeasible_fraction, 0.25);
    }
}
