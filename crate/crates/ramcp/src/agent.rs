//! The online anytime planning loop.
//!
//! One trial interleaves planning and acting for as many decision steps as
//! the horizon allows. Each step: simulations grow the search tree and the
//! explicit tree of threshold-meeting plays under a time or simulation
//! budget; a step decision is computed (constrained program over the
//! recorded plays when the risk budget is workable, the risk-bound
//! minimizer when it is not, the plain best search action when the
//! constraint cannot bind); an action is sampled from the decision; the
//! environment answers with an observation and reward; then the threshold,
//! the risk budget, the exact root belief, and both trees are re-rooted
//! under the played action and received observation.
//!
//! All randomness comes from named substreams of one [`RandomSource`], so a
//! trial is a pure function of `(model, config, seed, trial index)`.

use crate::cmdp::{self, ActionDecision, CmdpError, Mode};
use crate::model::{belief_update, ActionId, HorizonSpec, ModelError, Pomdp};
use crate::risk::{ExplicitTree, RiskError};
use crate::sampler::RandomSource;
use crate::search::{SearchTree, SimContext};
use std::time::Instant;

/// Per-step planning effort.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Budget {
    /// Exactly this many simulations.
    Sims(u64),
    /// Keep simulating until this much wall time has passed (at least one
    /// simulation always runs).
    Millis(u64),
}

/// The first decision usually deserves a larger budget than the rest.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BudgetSchedule {
    pub first: Budget,
    pub step: Budget,
}

impl Default for BudgetSchedule {
    fn default() -> Self {
        BudgetSchedule {
            first: Budget::Millis(5000),
            step: Budget::Millis(100),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub tau: f64,
    pub alpha: f64,
    pub horizon: HorizonSpec,
    pub budget: BudgetSchedule,
    /// UCB exploration constant; `None` picks
    /// `2 * (r_max - r_min) * decisions`, twice the payoff spread.
    pub k: Option<f64>,
    /// Particle reservoir size per search node (0 disables particles; the
    /// planner itself only uses exact root beliefs).
    pub particle_cap: usize,
}

impl AgentConfig {
    pub fn new(tau: f64, alpha: f64, horizon: HorizonSpec) -> Self {
        AgentConfig {
            tau,
            alpha,
            horizon,
            budget: BudgetSchedule::default(),
            k: None,
            particle_cap: 0,
        }
    }
}

/// Everything observable about one finished trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    /// Realized discounted payoff of the played episode.
    pub payoff: f64,
    /// Whether the payoff met the (possibly horizon-adjusted) threshold.
    pub safe: bool,
    /// Root risk bound after the first planning phase.
    pub first_root_u: f64,
    /// Risk the agent was entitled to state before acting:
    /// `max(first_root_u, alpha)`.
    pub stated_risk: f64,
    /// Decision mode of every step.
    pub modes: Vec<Mode>,
    /// Risk budget in force at each step (before the step's decision).
    pub rbounds: Vec<f64>,
    pub steps: usize,
    pub sims: u64,
    /// Wall time of the whole trial; 0 under pure simulation budgets so
    /// that output is reproducible byte for byte.
    pub wall_ms: u64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Decision(#[from] CmdpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const ENV_STREAM: u64 = 1;
const PLAN_STREAM: u64 = 2;
const DECIDE_STREAM: u64 = 3;

/// Chooses the step's decision per the planner's three-way dispatch.
fn select_action(
    tree: &ExplicitTree,
    search: &SearchTree,
    rbound: f64,
    nz: usize,
) -> Result<ActionDecision, AgentError> {
    if rbound < 1.0 && tree.root_u() < 1.0 {
        if tree.root_u() <= rbound {
            match cmdp::solve_decision(tree, rbound) {
                Ok(d) => Ok(d),
                // A numerically stuck program still leaves the certified
                // risk-minimizing play available.
                Err(CmdpError::Lp(_)) => Ok(cmdp::risk_min_fallback(tree)?),
                Err(e) => Err(e.into()),
            }
        } else {
            Ok(cmdp::risk_min_fallback(tree)?)
        }
    } else {
        Ok(cmdp::unconstrained_decision(search, nz))
    }
}

/// Runs one complete plan-act episode against a simulated environment drawn
/// from the model itself.
pub fn run_trial(
    model: &Pomdp,
    config: &AgentConfig,
    source: &RandomSource,
    trial: u64,
) -> Result<TrialRecord, AgentError> {
    let (decisions, tau_eff) = config.horizon.resolve(model, config.tau);
    let (r_min, r_max) = model.reward_bounds();
    let k = config.k.unwrap_or(2.0 * (r_max - r_min) * decisions as f64);
    let timed = matches!(config.budget.first, Budget::Millis(_))
        || matches!(config.budget.step, Budget::Millis(_));
    let started = Instant::now();

    let mut belief = model.initial_belief().clone();
    let mut search = SearchTree::new(model.num_actions(), config.particle_cap);
    let mut tree = ExplicitTree::new(model, &belief, tau_eff, decisions, &mut search)?;
    let mut env = source.stream(&[ENV_STREAM, trial]);
    let mut state = env.sample_state(&belief);

    let mut rbound = config.alpha;
    let mut payoff = 0.0;
    let mut disc = 1.0;
    let mut first_root_u = 1.0;
    let mut modes = Vec::with_capacity(decisions);
    let mut rbounds = Vec::with_capacity(decisions);
    let mut total_sims = 0u64;

    for step in 0..decisions {
        let budget = if step == 0 {
            config.budget.first
        } else {
            config.budget.step
        };
        let mut plan = source.stream(&[PLAN_STREAM, trial, step as u64]);
        {
            let mut ctx = SimContext::new(model, &mut search, &mut tree, k);
            match budget {
                Budget::Sims(n) => {
                    for _ in 0..n {
                        let s = plan.sample_state(&belief);
                        ctx.simulate_from(s, &mut plan)?;
                    }
                    total_sims += n;
                }
                Budget::Millis(ms) => {
                    let deadline = Instant::now() + std::time::Duration::from_millis(ms);
                    loop {
                        let s = plan.sample_state(&belief);
                        ctx.simulate_from(s, &mut plan)?;
                        total_sims += 1;
                        if Instant::now() >= deadline {
                            break;
                        }
                    }
                }
            }
        }
        if step == 0 {
            first_root_u = tree.root_u();
        }
        rbounds.push(rbound);
        let decision = select_action(&tree, &search, rbound, model.num_observations())?;
        modes.push(decision.mode);
        let mut decide = source.stream(&[DECIDE_STREAM, trial, step as u64]);
        let a = ActionId(decide.sample_index(&decision.d_pi) as u16);
        let (next_state, o, r) = env.sample_step(model, state, a);
        debug_assert!(
            (r - tree.reward(tree.root(), a.0)).abs() <= 1e-9,
            "environment reward disagrees with the root belief"
        );
        payoff += disc * r;
        disc *= model.discount();
        state = next_state;
        if step + 1 == decisions {
            break;
        }
        rbound = decision.risk[a.0 as usize][o.0 as usize];
        belief = belief_update(model, &belief, a, o)?;
        let search_remap = search.prune(a.0, o.0);
        tree.prune(a, o, &belief, model, &mut search, &search_remap)?;
    }

    Ok(TrialRecord {
        trial,
        seed: source.seed(),
        payoff,
        safe: payoff >= tau_eff - 1e-9,
        first_root_u,
        stated_risk: first_root_u.max(config.alpha),
        modes,
        rbounds,
        steps: decisions,
        sims: total_sims,
        wall_ms: if timed {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;

    fn sims_config(tau: f64, alpha: f64, first: u64, step: u64) -> AgentConfig {
        let mut config = AgentConfig::new(tau, alpha, HorizonSpec::Steps(4));
        config.budget = BudgetSchedule {
            first: Budget::Sims(first),
            step: Budget::Sims(step),
        };
        config
    }

    #[test]
    fn vacuous_budgets_skip_the_constraint() {
        let m = bench::gen_example1();
        let source = RandomSource::new(100);
        let rec = run_trial(&m, &sims_config(1.0, 1.0, 50, 20), &source, 0).unwrap();
        assert_eq!(rec.steps, 5);
        assert_eq!(rec.sims, 50 + 4 * 20);
        assert!(rec.modes.iter().all(|&m| m == Mode::Unconstrained));
        assert!(rec.rbounds.iter().all(|&r| r == 1.0));
        assert_eq!(rec.wall_ms, 0);
        assert_eq!(rec.stated_risk, 1.0);
    }

    #[test]
    fn hopeless_budgets_fall_back_to_risk_minimizing() {
        let m = bench::gen_example1();
        let source = RandomSource::new(101);
        // The dead branch forces risk 1/2; a budget of 0.1 is unattainable.
        let rec = run_trial(&m, &sims_config(1.0, 0.1, 500, 100), &source, 0).unwrap();
        assert!(rec.first_root_u < 1.0, "no safe play was found");
        assert_eq!(rec.modes[0], Mode::RiskMinimizing);
        assert_eq!(rec.rbounds[0], 0.1);
        // The minimizer hands zero budget to every continuation.
        assert_eq!(rec.rbounds[1], 0.0);
        assert!((rec.stated_risk - rec.first_root_u).abs() < 1e-12);
    }

    #[test]
    fn impossible_thresholds_run_unconstrained() {
        let m = bench::gen_example1();
        let source = RandomSource::new(102);
        let rec = run_trial(&m, &sims_config(1e9, 0.5, 200, 50), &source, 0).unwrap();
        assert_eq!(rec.first_root_u, 1.0);
        assert_eq!(rec.stated_risk, 1.0);
        assert!(!rec.safe);
        assert!(rec.modes.iter().all(|&m| m == Mode::Unconstrained));
    }

    #[test]
    fn workable_budgets_plan_constrained_and_track_the_threshold() {
        let m = bench::gen_example1();
        let source = RandomSource::new(103);
        let rec = run_trial(&m, &sims_config(1.0, 2.0 / 3.0, 2000, 200), &source, 0).unwrap();
        // Enough exploration certifies the exact minimum risk.
        assert!((rec.first_root_u - 0.5).abs() < 1e-9);
        assert_eq!(rec.modes[0], Mode::Constrained);
        assert!((rec.stated_risk - 2.0 / 3.0).abs() < 1e-12);
        // Every playable payoff is one of the four loop sums; safety is
        // exactly "the payoff met the threshold".
        let possible = [-21.875, 4.375, 4375.0, -43.75];
        assert!(
            possible.iter().any(|&p| (rec.payoff - p).abs() < 1e-9),
            "payoff {}",
            rec.payoff
        );
        assert_eq!(rec.safe, rec.payoff >= 1.0 - 1e-9);
    }

    #[test]
    fn trials_are_pure_functions_of_their_inputs() {
        let m = bench::gen_example1();
        let config = sims_config(1.0, 2.0 / 3.0, 300, 60);
        let source = RandomSource::new(104);
        let a = run_trial(&m, &config, &source, 7).unwrap();
        let b = run_trial(&m, &config, &source, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.wall_ms, 0);
    }

    #[test]
    fn time_budgets_always_make_progress() {
        let m = bench::gen_example1();
        let mut config = AgentConfig::new(1.0, 2.0 / 3.0, HorizonSpec::Steps(4));
        config.budget = BudgetSchedule {
            first: Budget::Millis(1),
            step: Budget::Millis(1),
        };
        let source = RandomSource::new(105);
        let rec = run_trial(&m, &config, &source, 0).unwrap();
        assert_eq!(rec.steps, 5);
        assert!(rec.sims >= 5, "at least one simulation per step");
    }
}
