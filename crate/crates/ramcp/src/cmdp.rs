//! Per-step action decisions over the recorded safe-play tree.
//!
//! When the risk budget is workable, the step's choice is the solution of a
//! small constrained MDP solved as a linear program over occupation
//! measures: interior nodes of the recorded tree route flow along their
//! recorded actions, safe leaves and unexplored frontier nodes absorb it,
//! the flow into safe leaves must cover `1 - rbound`, and the objective is
//! the discounted reward of the routed flow plus each frontier node's
//! pooled return estimate. The optimal root flow is the action
//! distribution; conditional safe-reach probabilities under the optimal
//! flow give each observation its continuation risk budget.
//!
//! When even the safest recorded behavior exceeds the budget, the step
//! falls back to minimizing the risk bound outright, and when the budget is
//! vacuous (or nothing recorded can help) it falls back to the plain
//! highest-value action from search statistics.

use crate::lp::{LpError, Problem};
use crate::risk::ExplicitTree;
use crate::search::{FastMap, SearchTree};
use std::fmt::Write as _;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    /// LP over the recorded tree; risk constraint active.
    Constrained,
    /// Budget unattainable: play the action minimizing the risk bound.
    RiskMinimizing,
    /// Budget vacuous: play the highest-value action from search.
    Unconstrained,
}

impl Mode {
    /// Single-letter tag used in run logs.
    pub fn tag(self) -> char {
        match self {
            Mode::Constrained => 'C',
            Mode::RiskMinimizing => 'R',
            Mode::Unconstrained => 'U',
        }
    }
}

/// One step's randomized decision: an action distribution plus, per action
/// and observation, the risk budget handed to the continuation.
#[derive(Clone, Debug)]
pub struct ActionDecision {
    pub d_pi: Vec<f64>,
    /// `risk[a][o]`: continuation risk budget after playing `a`, observing
    /// `o`. Entries for never-played actions or impossible observations are
    /// vacuous (1).
    pub risk: Vec<Vec<f64>>,
    pub mode: Mode,
    /// Objective value of the decision (root-relative discounted payoff);
    /// meaningful for [`Mode::Constrained`] and [`Mode::Unconstrained`].
    pub value: f64,
    /// Risk this decision certifies: LP unsafe mass, the minimized risk
    /// bound, or 1 when unconstrained.
    pub claimed_risk: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CmdpError {
    #[error("no recorded action at the root; nothing to constrain")]
    NoRecordedActions,
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

/// The flow program extracted from the recorded tree.
struct Closure {
    /// Interior nodes (expanded), discovery order; root first.
    interior: Vec<u32>,
    /// Allowed actions per interior node (parallel to `interior`).
    actions: Vec<Vec<u16>>,
    /// First LP variable of each interior node's action block.
    y_base: Vec<usize>,
    /// Absorbing nodes (safe leaves and frontier), discovery order.
    sinks: Vec<u32>,
    /// First sink variable.
    z_base: usize,
    n_vars: usize,
    interior_idx: FastMap<u32, usize>,
    sink_idx: FastMap<u32, usize>,
}

fn build_closure(tree: &ExplicitTree) -> Result<Closure, CmdpError> {
    let root = tree.root();
    if !tree.is_expanded(root) {
        return Err(CmdpError::NoRecordedActions);
    }
    let mut closure = Closure {
        interior: Vec::new(),
        actions: Vec::new(),
        y_base: Vec::new(),
        sinks: Vec::new(),
        z_base: 0,
        n_vars: 0,
        interior_idx: FastMap::default(),
        sink_idx: FastMap::default(),
    };
    let mut queue = vec![root];
    closure.interior_idx.insert(root, 0);
    closure.interior.push(root);
    let mut head = 0;
    while head < queue.len() {
        let node = queue[head];
        head += 1;
        let allowed = tree.allowed_actions(node);
        debug_assert!(!allowed.is_empty(), "expanded node with nothing recorded");
        for &a in &allowed {
            for e in tree.edges(node) {
                if e.a != a {
                    continue;
                }
                if tree.is_expanded(e.child) {
                    if !closure.interior_idx.contains_key(&e.child) {
                        closure.interior_idx.insert(e.child, closure.interior.len());
                        closure.interior.push(e.child);
                        queue.push(e.child);
                    }
                } else if !closure.sink_idx.contains_key(&e.child) {
                    // Safe leaves and unexpanded frontier nodes both absorb.
                    closure.sink_idx.insert(e.child, closure.sinks.len());
                    closure.sinks.push(e.child);
                }
            }
        }
        closure.actions.push(allowed);
    }
    let mut base = 0;
    for actions in &closure.actions {
        closure.y_base.push(base);
        base += actions.len();
    }
    closure.z_base = base;
    closure.n_vars = base + closure.sinks.len();
    Ok(closure)
}

fn build_program(tree: &ExplicitTree, closure: &Closure, rbound: f64) -> Problem {
    let mut lp = Problem::new(closure.n_vars);
    for (i, (&node, actions)) in closure.interior.iter().zip(&closure.actions).enumerate() {
        let mut row = vec![0.0; closure.n_vars];
        for (j, _) in actions.iter().enumerate() {
            row[closure.y_base[i] + j] = 1.0;
        }
        if node == tree.root() {
            lp.push_eq(row, 1.0);
        } else {
            subtract_inflow(tree, closure, node, &mut row);
            lp.push_eq(row, 0.0);
        }
    }
    for (k, &sink) in closure.sinks.iter().enumerate() {
        let mut row = vec![0.0; closure.n_vars];
        row[closure.z_base + k] = 1.0;
        subtract_inflow(tree, closure, sink, &mut row);
        lp.push_eq(row, 0.0);
    }
    let mut safety = vec![0.0; closure.n_vars];
    for (k, &sink) in closure.sinks.iter().enumerate() {
        if tree.is_safe_leaf(sink) {
            safety[closure.z_base + k] = 1.0;
        }
    }
    lp.push_ge(safety, 1.0 - rbound);
    for (i, (&node, actions)) in closure.interior.iter().zip(&closure.actions).enumerate() {
        let disc = tree.disc_pow(tree.depth(node));
        for (j, &a) in actions.iter().enumerate() {
            lp.objective[closure.y_base[i] + j] = disc * tree.reward(node, a);
        }
    }
    for (k, &sink) in closure.sinks.iter().enumerate() {
        if !tree.is_safe_leaf(sink) {
            lp.objective[closure.z_base + k] =
                tree.disc_pow(tree.depth(sink)) * tree.frontier_value(sink);
        }
    }
    lp
}

/// Subtracts `sum of p * y(parent, a)` over closure edges into `node`.
fn subtract_inflow(tree: &ExplicitTree, closure: &Closure, node: u32, row: &mut [f64]) {
    for (i, (&parent, actions)) in closure.interior.iter().zip(&closure.actions).enumerate() {
        for (j, &a) in actions.iter().enumerate() {
            for e in tree.edges(parent) {
                if e.a == a && e.child == node {
                    row[closure.y_base[i] + j] -= e.p;
                }
            }
        }
    }
}

/// Solves the constrained step decision over the recorded tree.
///
/// Errors surface only when nothing is recorded at the root or the program
/// is numerically stuck even after retrying with the certified-feasible
/// safety level; callers then fall back to [`risk_min_fallback`].
pub fn solve_decision(tree: &ExplicitTree, rbound: f64) -> Result<ActionDecision, CmdpError> {
    let closure = build_closure(tree)?;
    let lp = build_program(tree, &closure, rbound);
    let solution = match lp.solve() {
        Ok(s) => s,
        Err(LpError::Infeasible) => {
            // The tree certifies that risk tree.root_u() is achievable, so a
            // marginally looser demand must be feasible; the first attempt
            // can only have failed numerically.
            let lp = build_program(tree, &closure, rbound.max(tree.root_u() + 1e-9));
            lp.solve()?
        }
        Err(e) => return Err(e.into()),
    };
    Ok(extract_decision(
        tree,
        &closure,
        &solution.x,
        solution.value,
    ))
}

fn extract_decision(
    tree: &ExplicitTree,
    closure: &Closure,
    x: &[f64],
    value: f64,
) -> ActionDecision {
    let na = tree.num_actions();
    let nz = tree.num_observations();
    // Safe-reach probability of each closure node under the optimal flow.
    let mut phi: FastMap<u32, f64> = FastMap::default();
    for &sink in &closure.sinks {
        phi.insert(sink, if tree.is_safe_leaf(sink) { 1.0 } else { 0.0 });
    }
    let mut order: Vec<usize> = (0..closure.interior.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(tree.depth(closure.interior[i])));
    for i in order {
        let node = closure.interior[i];
        let actions = &closure.actions[i];
        let outflow: f64 = (0..actions.len()).map(|j| x[closure.y_base[i] + j]).sum();
        let mut reach = 0.0;
        if outflow > 1e-12 {
            for (j, &a) in actions.iter().enumerate() {
                let weight = x[closure.y_base[i] + j] / outflow;
                if weight <= 0.0 {
                    continue;
                }
                let mut branch = 0.0;
                for e in tree.edges(node) {
                    if e.a == a {
                        branch += e.p * phi.get(&e.child).copied().unwrap_or(0.0);
                    }
                }
                reach += weight * branch;
            }
        }
        phi.insert(node, reach);
    }
    let root_actions = &closure.actions[0];
    let mut d_pi = vec![0.0; na];
    for (j, &a) in root_actions.iter().enumerate() {
        d_pi[a as usize] = x[closure.y_base[0] + j].max(0.0);
    }
    let total: f64 = d_pi.iter().sum();
    if total > 0.0 {
        for p in &mut d_pi {
            *p /= total;
        }
    } else {
        d_pi[root_actions[0] as usize] = 1.0;
    }
    let mut risk = vec![vec![1.0; nz]; na];
    for (j, &a) in root_actions.iter().enumerate() {
        let y = x[closure.y_base[0] + j];
        for e in tree.edges(tree.root()) {
            if e.a != a {
                continue;
            }
            risk[a as usize][e.o as usize] = if y * e.p > 1e-12 {
                (1.0 - phi.get(&e.child).copied().unwrap_or(0.0)).clamp(0.0, 1.0)
            } else {
                // Unreached under the optimal flow: certify what the
                // recorded tree certifies for the continuation.
                tree.u(e.child)
            };
        }
    }
    let safe_mass: f64 = closure
        .sinks
        .iter()
        .enumerate()
        .filter(|(_, &s)| tree.is_safe_leaf(s))
        .map(|(k, _)| x[closure.z_base + k])
        .sum();
    ActionDecision {
        d_pi,
        risk,
        mode: Mode::Constrained,
        value,
        claimed_risk: (1.0 - safe_mass).clamp(0.0, 1.0),
    }
}

/// Plays the recorded action with the lowest risk bound and passes zero
/// risk budget to every continuation. Used when the step's budget is below
/// everything the recorded tree can certify.
pub fn risk_min_fallback(tree: &ExplicitTree) -> Result<ActionDecision, CmdpError> {
    let root = tree.root();
    let na = tree.num_actions();
    let nz = tree.num_observations();
    let mut best: Option<(u16, f64)> = None;
    for a in 0..na as u16 {
        if let Some(u) = tree.u_action(root, a) {
            if best.is_none_or(|(_, bu)| u < bu) {
                best = Some((a, u));
            }
        }
    }
    let (a, u) = best.ok_or(CmdpError::NoRecordedActions)?;
    let mut d_pi = vec![0.0; na];
    d_pi[a as usize] = 1.0;
    Ok(ActionDecision {
        d_pi,
        risk: vec![vec![0.0; nz]; na],
        mode: Mode::RiskMinimizing,
        value: 0.0,
        claimed_risk: u,
    })
}

/// Plays the highest-value root action by search statistics; risk budgets
/// are vacuous. Used when the risk constraint cannot bind.
pub fn unconstrained_decision(search: &SearchTree, nz: usize) -> ActionDecision {
    let na = search.num_actions();
    let root = search.root();
    let mut a_best = 0u16;
    let mut v_best = f64::NEG_INFINITY;
    for a in 0..na as u16 {
        if search.action_visits(root, a) > 0 {
            let v = search.action_value(root, a);
            if v > v_best {
                v_best = v;
                a_best = a;
            }
        }
    }
    if v_best == f64::NEG_INFINITY {
        v_best = 0.0;
    }
    let mut d_pi = vec![0.0; na];
    d_pi[a_best as usize] = 1.0;
    ActionDecision {
        d_pi,
        risk: vec![vec![1.0; nz]; na],
        mode: Mode::Unconstrained,
        value: v_best,
        claimed_risk: 1.0,
    }
}

/// Textual rendering of the step's linear program (diagnostics).
pub fn dump_lp(tree: &ExplicitTree, rbound: f64) -> String {
    let closure = match build_closure(tree) {
        Ok(c) => c,
        Err(e) => return format!("no program: {e}\n"),
    };
    let lp = build_program(tree, &closure, rbound);
    let mut out = String::new();
    let var_name = |v: usize| -> String {
        if v >= closure.z_base {
            let sink = closure.sinks[v - closure.z_base];
            format!(
                "z[{}{}]",
                sink,
                if tree.is_safe_leaf(sink) { ",safe" } else { "" }
            )
        } else {
            for (i, actions) in closure.actions.iter().enumerate() {
                let base = closure.y_base[i];
                if v >= base && v < base + actions.len() {
                    return format!("y[{},a{}]", closure.interior[i], actions[v - base]);
                }
            }
            unreachable!("variable outside both blocks")
        }
    };
    let render = |row: &[f64], out: &mut String| {
        let mut first = true;
        for (v, &c) in row.iter().enumerate() {
            if c != 0.0 {
                if !first {
                    out.push_str(" + ");
                }
                let _ = write!(out, "{c:.6}*{}", var_name(v));
                first = false;
            }
        }
        if first {
            out.push('0');
        }
    };
    out.push_str("maximize ");
    render(&lp.objective, &mut out);
    out.push('\n');
    for (row, rhs) in &lp.eq {
        render(row, &mut out);
        let _ = writeln!(out, " = {rhs:.6}");
    }
    for (row, rhs) in &lp.ge {
        render(row, &mut out);
        let _ = writeln!(out, " >= {rhs:.6}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;
    use crate::model::{ActionId, HorizonSpec, Pomdp};
    use crate::oracle::{self, OracleLimits};
    use crate::risk::ExplicitTree;

    const LIMITS: OracleLimits = OracleLimits {
        max_nodes: 200_000,
        max_lp_vars: 4_000,
        max_pareto: 200_000,
    };

    /// Builds the recorded tree holding every threshold-meeting history of
    /// the model, with each unexplored frontier node's pooled estimate set
    /// to its exact unconstrained continuation value.
    fn complete_tree(m: &Pomdp, tau: f64, steps: u32) -> (crate::search::SearchTree, ExplicitTree) {
        let spec = HorizonSpec::Steps(steps);
        let (decisions, tau_eff) = spec.resolve(m, tau);
        let mut search = crate::search::SearchTree::new(m.num_actions(), 0);
        let mut tree =
            ExplicitTree::new(m, m.initial_belief(), tau_eff, decisions, &mut search).unwrap();
        for h in oracle::safe_histories(m, tau, spec, &LIMITS).unwrap() {
            tree.insert_safe_path(&h, &mut search, &m.clone()).unwrap();
        }
        seed_frontiers(m, &mut tree, decisions);
        (search, tree)
    }

    fn seed_frontiers(m: &Pomdp, tree: &mut ExplicitTree, decisions: usize) {
        for node in 0..tree.len() as u32 {
            if !tree.is_expanded(node) {
                continue;
            }
            let edges = tree.edges(node).to_vec();
            for e in edges {
                let left = decisions - tree.depth(e.child);
                if tree.is_contentful(e.child) || left == 0 {
                    continue;
                }
                let v = oracle::belief_value_dp(m, tree.belief(e.child), left, &LIMITS).unwrap();
                tree.seed_action_value(e.child, 0, v);
            }
        }
    }

    #[test]
    fn complete_tree_reproduces_the_exact_constrained_optimum() {
        let m = bench::gen_example1();
        let (_search, tree) = complete_tree(&m, 1.0, 4);
        assert_eq!(tree.root_u(), 0.5);
        let d = solve_decision(&tree, 2.0 / 3.0).unwrap();
        assert_eq!(d.mode, Mode::Constrained);
        // Hand value: gamble with probability 2/3 at the decision state.
        assert!(
            (d.value - 711.666_666_666_666_7).abs() < 1e-6,
            "value {}",
            d.value
        );
        assert!((d.claimed_risk - 2.0 / 3.0).abs() < 1e-6);
        let exact = oracle::exact_eopg(&m, 1.0, 2.0 / 3.0, HorizonSpec::Steps(4), &LIMITS)
            .unwrap()
            .value;
        assert!((d.value - exact).abs() < 1e-6);

        // Entering the decision state leaves a third of the budget; the
        // dead branch keeps a vacuous budget.
        let obs_t = bench::obs_named(&m, "t").0 as usize;
        let obs_u = bench::obs_named(&m, "u").0 as usize;
        let played: Vec<usize> = (0..d.d_pi.len()).filter(|&a| d.d_pi[a] > 1e-9).collect();
        assert!(!played.is_empty());
        for &a in &played {
            assert!((d.risk[a][obs_t] - 1.0 / 3.0).abs() < 1e-6);
            assert!((d.risk[a][obs_u] - 1.0).abs() < 1e-6);
        }

        // Law of total risk at the root.
        let mut total = 0.0;
        for e in tree.edges(tree.root()) {
            total += d.d_pi[e.a as usize] * e.p * d.risk[e.a as usize][e.o as usize];
        }
        assert!(total <= 2.0 / 3.0 + 1e-7, "total risk {total}");
    }

    #[test]
    fn stepping_into_the_decision_state_splits_the_remaining_budget() {
        let m = bench::gen_example1();
        let (mut search, mut tree) = complete_tree(&m, 1.0, 4);
        let (next, _) = crate::model::belief_update_full(
            &m,
            m.initial_belief(),
            ActionId(0),
            bench::obs_named(&m, "t"),
        )
        .unwrap();
        let remap = search.prune(0, bench::obs_named(&m, "t").0);
        tree.prune(
            ActionId(0),
            bench::obs_named(&m, "t"),
            &next,
            &m,
            &mut search,
            &remap,
        )
        .unwrap();
        assert_eq!(tree.root_u(), 0.0);
        assert_eq!(tree.thr(), 2.0);

        let d = solve_decision(&tree, 1.0 / 3.0).unwrap();
        let b = bench::action_named(&m, "b").0 as usize;
        assert!((d.d_pi[b] - 2.0 / 3.0).abs() < 1e-6, "d_pi {:?}", d.d_pi);
        assert!(
            (d.value - 2_890.416_666_666_667).abs() < 1e-6,
            "value {}",
            d.value
        );
        assert!((d.claimed_risk - 1.0 / 3.0).abs() < 1e-6);

        // A vacuous budget routes everything through the gamble.
        let d = solve_decision(&tree, 1.0).unwrap();
        assert!((d.d_pi[b] - 1.0).abs() < 1e-6);
        assert!((d.value - 4331.25).abs() < 1e-6);
        assert!((d.claimed_risk - 0.5).abs() < 1e-6);
    }

    #[test]
    fn budgets_below_the_certified_risk_are_retried_at_the_certificate() {
        let m = bench::gen_example1();
        let (_search, tree) = complete_tree(&m, 1.0, 4);
        // 0.3 < root risk bound 0.5: the strict program is infeasible and
        // the solve must settle at the certified level instead of erroring.
        let d = solve_decision(&tree, 0.3).unwrap();
        assert_eq!(d.mode, Mode::Constrained);
        assert!(d.claimed_risk <= 0.5 + 1e-6, "claimed {}", d.claimed_risk);
        // The 1e-9 retry slack is worth ~4e-6 of objective here.
        assert!((d.value - (-8.75)).abs() < 1e-4, "value {}", d.value);
    }

    #[test]
    fn fallback_plays_the_lowest_risk_bound_action() {
        // Two actions with different chances of reaching the safe state.
        let m = Pomdp::from_parts(crate::model::PomdpParts {
            discount: 0.5,
            state_names: vec!["lo".into(), "hi".into()],
            action_names: vec!["coarse".into(), "fine".into()],
            obs_names: vec!["saw-lo".into(), "saw-hi".into()],
            transition: vec![0.5, 0.5, 0.9, 0.1, 0.5, 0.5, 0.9, 0.1],
            observation: vec![1.0, 0.0, 0.0, 1.0],
            reward: vec![0.0, 0.0, 0.0, 0.0],
            initial_belief: vec![1.0, 0.0],
        })
        .unwrap();
        let mut search = crate::search::SearchTree::new(2, 0);
        let mut tree = ExplicitTree::new(&m, m.initial_belief(), 0.0, 1, &mut search).unwrap();
        tree.insert_safe_path(&[(0, 0, 0.0)], &mut search, &m)
            .unwrap();
        tree.insert_safe_path(&[(1, 0, 0.0)], &mut search, &m)
            .unwrap();
        let d = risk_min_fallback(&tree).unwrap();
        assert_eq!(d.mode, Mode::RiskMinimizing);
        assert_eq!(d.d_pi, vec![0.0, 1.0]);
        assert!((d.claimed_risk - 0.1).abs() < 1e-12);
        assert!(d.risk.iter().flatten().all(|&r| r == 0.0));
    }

    #[test]
    fn fallback_breaks_ties_toward_the_lowest_index() {
        let m = bench::gen_example1();
        let (_search, tree) = complete_tree(&m, 1.0, 4);
        // Both root actions certify the same bound.
        let d = risk_min_fallback(&tree).unwrap();
        assert_eq!(d.d_pi[0], 1.0);
        assert!((d.claimed_risk - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_choice_follows_search_statistics() {
        let mut search = crate::search::SearchTree::new(3, 0);
        search.backup(0, 0, 1.0);
        search.backup(0, 1, 5.0);
        let d = unconstrained_decision(&search, 2);
        assert_eq!(d.mode, Mode::Unconstrained);
        assert_eq!(d.d_pi, vec![0.0, 1.0, 0.0]);
        assert_eq!(d.value, 5.0);
        assert_eq!(d.claimed_risk, 1.0);
        assert!(d.risk.iter().flatten().all(|&r| r == 1.0));

        let empty = crate::search::SearchTree::new(3, 0);
        let d = unconstrained_decision(&empty, 2);
        assert_eq!(d.d_pi, vec![1.0, 0.0, 0.0]);
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn an_unexpanded_root_has_nothing_to_decide_with() {
        let m = bench::gen_example1();
        let mut search = crate::search::SearchTree::new(m.num_actions(), 0);
        let tree = ExplicitTree::new(&m, m.initial_belief(), 1.0, 5, &mut search).unwrap();
        assert!(matches!(
            solve_decision(&tree, 0.5),
            Err(CmdpError::NoRecordedActions)
        ));
        assert!(matches!(
            risk_min_fallback(&tree),
            Err(CmdpError::NoRecordedActions)
        ));
    }
}
