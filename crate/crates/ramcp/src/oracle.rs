//! Exact finite-horizon solvers for small instances.
//!
//! These expand the full belief DAG to the horizon — histories with equal
//! belief, depth, and accumulated discounted payoff share a node, and
//! actions with identical reward and transition signatures are merged — and
//! then answer, by direct computation on that DAG:
//!
//! - [`exact_eopg`]: the maximum expected discounted payoff subject to
//!   `P(payoff < tau) <= alpha`, via an occupation-measure linear program,
//!   together with an optimal root action distribution;
//! - [`exact_min_risk`]: the minimum achievable `P(payoff < tau)`;
//! - [`best_deterministic`]: the best feasible *deterministic* history
//!   policy, via a Pareto frontier sweep (randomized policies can beat it);
//! - [`belief_value_dp`] / [`belief_q_values`]: the unconstrained optimum
//!   by plain value iteration over `(belief, steps-to-go)` — an independent
//!   route used to cross-check the linear program;
//! - [`safe_histories`] / [`payoff_range`]: path-level enumeration helpers.
//!
//! Everything is guarded by [`OracleLimits`]; growth beyond the configured
//! budget surfaces as [`OracleError::TooLarge`] rather than an OOM.

use crate::lp::{LpError, Problem};
use crate::model::{Belief, HorizonSpec, Pomdp};
use crate::risk::{BeliefTable, RiskError};
use crate::search::FastMap;

#[derive(Copy, Clone, Debug)]
pub struct OracleLimits {
    /// Maximum belief-DAG nodes (and enumerated safe histories).
    pub max_nodes: usize,
    /// Maximum linear-program variables.
    pub max_lp_vars: usize,
    /// Maximum Pareto frontier entries alive at once.
    pub max_pareto: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_nodes: 200_000,
            max_lp_vars: 4_000,
            max_pareto: 200_000,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("no policy satisfies the risk constraint")]
    Infeasible,
    #[error("instance exceeds the configured exact-solver budget ({what})")]
    TooLarge { what: &'static str },
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

/// Constrained optimum and an action distribution achieving it.
#[derive(Clone, Debug)]
pub struct EopgSolution {
    pub value: f64,
    pub root_distribution: Vec<f64>,
}

struct DagAction {
    a: u16,
    rew: f64,
    /// `(o, child, p)` over positive-probability observations.
    edges: Vec<(u16, u32, f64)>,
}

struct DagNode {
    depth: u16,
    pay: f64,
    acts: Vec<DagAction>,
}

struct Dag {
    horizon: usize,
    gpow: Vec<f64>,
    nodes: Vec<DagNode>,
}

/// Expands the full belief DAG for `decisions` steps. When `track_pay` is
/// false, payoff is dropped from node identity (valid whenever safety does
/// not matter), which collapses the DAG to `(belief, depth)` classes.
fn build_dag(
    model: &Pomdp,
    decisions: usize,
    track_pay: bool,
    limits: &OracleLimits,
) -> Result<Dag, OracleError> {
    let na = model.num_actions();
    let nz = model.num_observations();
    let mut beliefs = BeliefTable::new(na);
    let mut gpow = Vec::with_capacity(decisions + 1);
    let mut g = 1.0;
    for _ in 0..=decisions {
        gpow.push(g);
        g *= model.discount();
    }
    let root_belief = beliefs.intern(model.initial_belief(), model)?;
    let mut nodes: Vec<DagNode> = Vec::new();
    let mut index: FastMap<(u32, u16, u64), u32> = FastMap::default();
    let mut pays: Vec<f64> = Vec::new();
    let mut node_beliefs: Vec<u32> = Vec::new();
    let mut intern = |belief: u32,
                      depth: u16,
                      pay: f64,
                      nodes: &mut Vec<DagNode>,
                      pays: &mut Vec<f64>,
                      node_beliefs: &mut Vec<u32>|
     -> Result<u32, OracleError> {
        let key = (belief, depth, if track_pay { pay.to_bits() } else { 0 });
        if let Some(&id) = index.get(&key) {
            return Ok(id);
        }
        if nodes.len() >= limits.max_nodes {
            return Err(OracleError::TooLarge {
                what: "belief DAG nodes",
            });
        }
        let id = nodes.len() as u32;
        nodes.push(DagNode {
            depth,
            pay,
            acts: Vec::new(),
        });
        pays.push(pay);
        node_beliefs.push(belief);
        index.insert(key, id);
        Ok(id)
    };
    intern(
        root_belief,
        0,
        0.0,
        &mut nodes,
        &mut pays,
        &mut node_beliefs,
    )?;
    let mut head = 0usize;
    while head < nodes.len() {
        let id = head as u32;
        head += 1;
        let depth = nodes[id as usize].depth;
        if depth as usize >= decisions {
            continue;
        }
        let belief = node_beliefs[id as usize];
        let pay = pays[id as usize];
        let mut seen: FastMap<Box<[u64]>, ()> = FastMap::default();
        let mut acts = Vec::new();
        for a in 0..na as u16 {
            let rew = beliefs.reward(belief, a);
            let pay2 = pay + gpow[depth as usize] * rew;
            let mut edges = Vec::new();
            for o in 0..nz as u16 {
                if let Some((b2, p)) = beliefs.child(belief, a, o, model)? {
                    let child = intern(
                        b2,
                        depth + 1,
                        pay2,
                        &mut nodes,
                        &mut pays,
                        &mut node_beliefs,
                    )?;
                    edges.push((o, child, p));
                }
            }
            // Merge actions with identical reward and branching behavior;
            // the branch probabilities are part of the behavior.
            let mut sig: Vec<u64> = Vec::with_capacity(1 + 3 * edges.len());
            sig.push(rew.to_bits());
            for &(o, child, p) in &edges {
                sig.push(((o as u64) << 32) | child as u64);
                sig.push(p.to_bits());
            }
            if seen.insert(sig.into_boxed_slice(), ()).is_none() {
                acts.push(DagAction { a, rew, edges });
            }
        }
        nodes[id as usize].acts = acts;
    }
    Ok(Dag {
        horizon: decisions,
        gpow,
        nodes,
    })
}

/// Minimum achievable `P(payoff < tau)` over all history policies.
fn min_risk_on(dag: &Dag, tau: f64) -> f64 {
    let mut risk = vec![0.0; dag.nodes.len()];
    for id in (0..dag.nodes.len()).rev() {
        let node = &dag.nodes[id];
        risk[id] = if node.depth as usize == dag.horizon {
            if node.pay < tau {
                1.0
            } else {
                0.0
            }
        } else {
            let mut best = f64::INFINITY;
            for act in &node.acts {
                let r: f64 = act
                    .edges
                    .iter()
                    .map(|&(_, c, p)| p * risk[c as usize])
                    .sum();
                best = best.min(r);
            }
            // Sums of p * risk can drift a few ulps past the probability
            // range; the drift would otherwise leak into retry budgets.
            best.clamp(0.0, 1.0)
        };
    }
    risk[0]
}

pub fn exact_min_risk(
    model: &Pomdp,
    tau: f64,
    horizon: HorizonSpec,
    limits: &OracleLimits,
) -> Result<f64, OracleError> {
    let (decisions, tau) = horizon.resolve(model, tau);
    let dag = build_dag(model, decisions, true, limits)?;
    Ok(min_risk_on(&dag, tau))
}

/// Exact constrained optimum: maximum expected discounted payoff subject to
/// `P(payoff < tau) <= alpha`, over all (randomized, history-dependent)
/// policies, together with an optimal root action distribution.
pub fn exact_eopg(
    model: &Pomdp,
    tau: f64,
    alpha: f64,
    horizon: HorizonSpec,
    limits: &OracleLimits,
) -> Result<EopgSolution, OracleError> {
    let (decisions, tau) = horizon.resolve(model, tau);
    // With a vacuous risk constraint the payoff identity of a node is
    // irrelevant, which keeps the DAG collapsed to (belief, depth).
    let track_pay = alpha < 1.0;
    let dag = build_dag(model, decisions, track_pay, limits)?;
    if track_pay && min_risk_on(&dag, tau) > alpha {
        return Err(OracleError::Infeasible);
    }
    // Occupation-measure LP: y(node, act) for interior nodes, z(node) for
    // horizon leaves; flow conservation, root outflow 1, safe leaves must
    // absorb at least 1 - alpha.
    let mut y_base = vec![usize::MAX; dag.nodes.len()];
    let mut z_idx = vec![usize::MAX; dag.nodes.len()];
    let mut n_vars = 0usize;
    for (id, node) in dag.nodes.iter().enumerate() {
        if (node.depth as usize) < dag.horizon {
            y_base[id] = n_vars;
            n_vars += node.acts.len();
        } else {
            z_idx[id] = n_vars;
            n_vars += 1;
        }
    }
    if n_vars > limits.max_lp_vars {
        return Err(OracleError::TooLarge {
            what: "linear-program variables",
        });
    }
    let build = |alpha: f64| -> Problem {
        let mut lp = Problem::new(n_vars);
        for (id, node) in dag.nodes.iter().enumerate() {
            let mut row = vec![0.0; n_vars];
            if (node.depth as usize) < dag.horizon {
                for j in 0..node.acts.len() {
                    row[y_base[id] + j] = 1.0;
                }
            } else {
                row[z_idx[id]] = 1.0;
            }
            let rhs = if id == 0 { 1.0 } else { 0.0 };
            if id != 0 {
                for (pid, parent) in dag.nodes.iter().enumerate() {
                    if (parent.depth as usize) >= dag.horizon {
                        continue;
                    }
                    for (j, act) in parent.acts.iter().enumerate() {
                        for &(_, child, p) in &act.edges {
                            if child as usize == id {
                                row[y_base[pid] + j] -= p;
                            }
                        }
                    }
                }
            }
            lp.push_eq(row, rhs);
        }
        let mut safety = vec![0.0; n_vars];
        for (id, node) in dag.nodes.iter().enumerate() {
            if node.depth as usize == dag.horizon && (!track_pay || node.pay >= tau) {
                safety[z_idx[id]] = 1.0;
            }
        }
        lp.push_ge(safety, 1.0 - alpha);
        for (id, node) in dag.nodes.iter().enumerate() {
            if (node.depth as usize) < dag.horizon {
                for (j, act) in node.acts.iter().enumerate() {
                    lp.objective[y_base[id] + j] = dag.gpow[node.depth as usize] * act.rew;
                }
            }
        }
        lp
    };
    let solution = match build(alpha).solve() {
        Ok(s) => s,
        Err(LpError::Infeasible) if track_pay => {
            // Feasible by the min-risk check above; the strict demand can
            // only have failed numerically.
            build(alpha.max(min_risk_on(&dag, tau) + 1e-9)).solve()?
        }
        Err(e) => return Err(e.into()),
    };
    let mut dist = vec![0.0; model.num_actions()];
    for (j, act) in dag.nodes[0].acts.iter().enumerate() {
        dist[act.a as usize] = solution.x[y_base[0] + j].max(0.0);
    }
    let total: f64 = dist.iter().sum();
    if total > 0.0 {
        for p in &mut dist {
            *p /= total;
        }
    }
    Ok(EopgSolution {
        value: solution.value,
        root_distribution: dist,
    })
}

/// Best deterministic history policy: maximum expected discounted payoff
/// among policies that fix one action per history, subject to
/// `P(payoff < tau) <= alpha`. Computed by sweeping Pareto frontiers of
/// `(risk, value)` pairs up the DAG.
pub fn best_deterministic(
    model: &Pomdp,
    tau: f64,
    alpha: f64,
    horizon: HorizonSpec,
    limits: &OracleLimits,
) -> Result<f64, OracleError> {
    let (decisions, tau) = horizon.resolve(model, tau);
    let dag = build_dag(model, decisions, true, limits)?;
    let mut frontiers: Vec<Vec<(f64, f64)>> = vec![Vec::new(); dag.nodes.len()];
    let mut live = 0usize;
    for id in (0..dag.nodes.len()).rev() {
        let node = &dag.nodes[id];
        let mut pool: Vec<(f64, f64)> = Vec::new();
        if node.depth as usize == dag.horizon {
            pool.push((if node.pay < tau { 1.0 } else { 0.0 }, 0.0));
        } else {
            for act in &node.acts {
                let base = dag.gpow[node.depth as usize] * act.rew;
                let mut acc: Vec<(f64, f64)> = vec![(0.0, base)];
                for &(_, child, p) in &act.edges {
                    let mut next = Vec::with_capacity(acc.len() * frontiers[child as usize].len());
                    for &(r0, v0) in &acc {
                        for &(rc, vc) in &frontiers[child as usize] {
                            next.push((r0 + p * rc, v0 + p * vc));
                        }
                    }
                    prune_pareto(&mut next);
                    if next.len() > limits.max_pareto {
                        return Err(OracleError::TooLarge {
                            what: "Pareto frontier",
                        });
                    }
                    acc = next;
                }
                pool.extend(acc);
            }
        }
        prune_pareto(&mut pool);
        live += pool.len();
        if live > limits.max_pareto {
            return Err(OracleError::TooLarge {
                what: "Pareto frontier",
            });
        }
        frontiers[id] = pool;
    }
    frontiers[0]
        .iter()
        .filter(|&&(r, _)| r <= alpha + 1e-12)
        .map(|&(_, v)| v)
        .fold(None, |best: Option<f64>, v| {
            Some(best.map_or(v, |b| b.max(v)))
        })
        .ok_or(OracleError::Infeasible)
}

/// Keeps the nondominated `(risk, value)` pairs: strictly increasing value
/// as risk increases.
fn prune_pareto(pool: &mut Vec<(f64, f64)>) {
    pool.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.total_cmp(&a.1)));
    let mut kept = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..pool.len() {
        if pool[i].1 > best {
            best = pool[i].1;
            pool[kept] = pool[i];
            kept += 1;
        }
    }
    pool.truncate(kept);
}

/// Unconstrained optimum by value iteration over `(belief, steps to go)`;
/// an independent cross-check for the linear-program route.
pub fn belief_value_dp(
    model: &Pomdp,
    belief: &Belief,
    decisions: usize,
    limits: &OracleLimits,
) -> Result<f64, OracleError> {
    let q = belief_q_values(model, belief, decisions, limits)?;
    Ok(q.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Per-action unconstrained optimum (`max_a` of it is [`belief_value_dp`]).
pub fn belief_q_values(
    model: &Pomdp,
    belief: &Belief,
    decisions: usize,
    limits: &OracleLimits,
) -> Result<Vec<f64>, OracleError> {
    assert!(decisions >= 1, "at least one decision step is required");
    let mut table = BeliefTable::new(model.num_actions());
    let mut memo: FastMap<(u32, u32), f64> = FastMap::default();
    let root = table.intern(belief, model)?;
    let mut q = Vec::with_capacity(model.num_actions());
    for a in 0..model.num_actions() as u16 {
        q.push(q_value(
            model, &mut table, &mut memo, root, a, decisions, limits,
        )?);
    }
    Ok(q)
}

fn value_of(
    model: &Pomdp,
    table: &mut BeliefTable,
    memo: &mut FastMap<(u32, u32), f64>,
    belief: u32,
    steps: usize,
    limits: &OracleLimits,
) -> Result<f64, OracleError> {
    if steps == 0 {
        return Ok(0.0);
    }
    let key = (belief, steps as u32);
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    if memo.len() >= limits.max_nodes {
        return Err(OracleError::TooLarge {
            what: "value-iteration states",
        });
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.num_actions() as u16 {
        best = best.max(q_value(model, table, memo, belief, a, steps, limits)?);
    }
    memo.insert(key, best);
    Ok(best)
}

fn q_value(
    model: &Pomdp,
    table: &mut BeliefTable,
    memo: &mut FastMap<(u32, u32), f64>,
    belief: u32,
    a: u16,
    steps: usize,
    limits: &OracleLimits,
) -> Result<f64, OracleError> {
    let mut v = table.reward(belief, a);
    for o in 0..model.num_observations() as u16 {
        if let Some((b2, p)) = table.child(belief, a, o, model)? {
            v += model.discount() * p * value_of(model, table, memo, b2, steps - 1, limits)?;
        }
    }
    Ok(v)
}

/// One `(action, observation, reward)` step along an enumerated history.
pub type HistoryStep = (u16, u16, f64);

/// All positive-probability histories of full length whose payoff meets
/// `tau`, as [`HistoryStep`] triples. Small instances only.
pub fn safe_histories(
    model: &Pomdp,
    tau: f64,
    horizon: HorizonSpec,
    limits: &OracleLimits,
) -> Result<Vec<Vec<HistoryStep>>, OracleError> {
    let (decisions, tau) = horizon.resolve(model, tau);
    let mut table = BeliefTable::new(model.num_actions());
    let root = table.intern(model.initial_belief(), model)?;
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(decisions);
    let mut disc = Vec::with_capacity(decisions + 1);
    let mut g = 1.0;
    for _ in 0..=decisions {
        disc.push(g);
        g *= model.discount();
    }
    walk_safe(
        model, &mut table, root, 0.0, decisions, tau, &disc, &mut path, &mut out, limits,
    )?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk_safe(
    model: &Pomdp,
    table: &mut BeliefTable,
    belief: u32,
    pay: f64,
    remaining: usize,
    tau: f64,
    disc: &[f64],
    path: &mut Vec<(u16, u16, f64)>,
    out: &mut Vec<Vec<(u16, u16, f64)>>,
    limits: &OracleLimits,
) -> Result<(), OracleError> {
    if remaining == 0 {
        if pay >= tau {
            if out.len() >= limits.max_nodes {
                return Err(OracleError::TooLarge {
                    what: "safe histories",
                });
            }
            out.push(path.clone());
        }
        return Ok(());
    }
    let depth = path.len();
    for a in 0..model.num_actions() as u16 {
        let r = table.reward(belief, a);
        for o in 0..model.num_observations() as u16 {
            if let Some((b2, _)) = table.child(belief, a, o, model)? {
                path.push((a, o, r));
                walk_safe(
                    model,
                    table,
                    b2,
                    pay + disc[depth] * r,
                    remaining - 1,
                    tau,
                    disc,
                    path,
                    out,
                    limits,
                )?;
                path.pop();
            }
        }
    }
    Ok(())
}

/// Pathwise minimum and maximum discounted payoff over all
/// positive-probability histories of full length.
pub fn payoff_range(
    model: &Pomdp,
    horizon: HorizonSpec,
    limits: &OracleLimits,
) -> Result<(f64, f64), OracleError> {
    let (decisions, _) = horizon.resolve(model, 0.0);
    let mut table = BeliefTable::new(model.num_actions());
    let mut memo: FastMap<(u32, u32), (f64, f64)> = FastMap::default();
    let root = table.intern(model.initial_belief(), model)?;
    range_of(model, &mut table, &mut memo, root, decisions, limits)
}

fn range_of(
    model: &Pomdp,
    table: &mut BeliefTable,
    memo: &mut FastMap<(u32, u32), (f64, f64)>,
    belief: u32,
    steps: usize,
    limits: &OracleLimits,
) -> Result<(f64, f64), OracleError> {
    if steps == 0 {
        return Ok((0.0, 0.0));
    }
    let key = (belief, steps as u32);
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    if memo.len() >= limits.max_nodes {
        return Err(OracleError::TooLarge {
            what: "payoff-range states",
        });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..model.num_actions() as u16 {
        let r = table.reward(belief, a);
        for o in 0..model.num_observations() as u16 {
            if let Some((b2, _)) = table.child(belief, a, o, model)? {
                let (clo, chi) = range_of(model, table, memo, b2, steps - 1, limits)?;
                lo = lo.min(r + model.discount() * clo);
                hi = hi.max(r + model.discount() * chi);
            }
        }
    }
    memo.insert(key, (lo, hi));
    Ok((lo, hi))
}
