//! Explicit tree of threshold-meeting plays and its risk bounds.
//!
//! Whenever a simulation finishes a play whose discounted payoff meets the
//! safety threshold, the play's history is recorded here. Each recorded node
//! carries `U`, an upper bound on the minimum achievable probability of
//! ending below the threshold from that node: a node at the horizon that was
//! reached by a safe play has `U = 0`; elsewhere
//! `U_a = 1 - sum_o p(o) * (1 - U(child))` over recorded children and
//! `U = min_a U_a`, treating everything not yet recorded as unsafe. `U` only
//! tightens as more safe plays are found, and bounds the true minimum risk
//! from above at all times.
//!
//! Histories that carry the same belief, depth, and accumulated discounted
//! payoff root identical subproblems, so the tree stores one node per such
//! equivalence class and lets histories share it. Beliefs are interned
//! bit-exactly in a [`BeliefTable`] which also memoizes Bayes updates and
//! per-belief action rewards; reward observability is checked at interning
//! time (all support states of a belief must agree on every action's
//! reward).

use crate::model::{
    belief_update_full, shift_threshold, ActionId, Belief, ModelError, ObsId, Pomdp,
};
use crate::search::{FastMap, SearchTree};
use std::fmt::Write as _;

/// Sentinel for "no explicit-tree node".
pub const NO_CLASS: u32 = u32::MAX;

const PROB_FLOOR: f64 = 1e-12;
const REWARD_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RiskError {
    #[error("belief update failed on an observed step: {0}")]
    BeliefUpdate(#[from] ModelError),
    #[error(
        "states in one belief support disagree on the reward of action {action}: {first} vs {second}"
    )]
    RewardMismatch {
        action: u16,
        first: f64,
        second: f64,
    },
    #[error(
        "a simulated reward drifted from the belief-support reward for action {action}: {got} vs {expected}"
    )]
    RewardDrift {
        action: u16,
        got: f64,
        expected: f64,
    },
}

/// Bit-exact interner for beliefs, with memoized Bayes updates and
/// per-belief action rewards.
pub struct BeliefTable {
    na: usize,
    beliefs: Vec<Belief>,
    rewards: Vec<f64>,
    index: FastMap<Box<[u64]>, u32>,
    /// `(belief, a, o)` packed -> (child belief, observation probability);
    /// a child of [`NO_CLASS`] marks an impossible observation.
    children: FastMap<u64, (u32, f64)>,
}

impl BeliefTable {
    pub fn new(num_actions: usize) -> Self {
        BeliefTable {
            na: num_actions,
            beliefs: Vec::new(),
            rewards: Vec::new(),
            index: FastMap::default(),
            children: FastMap::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn get(&self, id: u32) -> &Belief {
        &self.beliefs[id as usize]
    }

    /// The reward every support state of the belief pays for `a`.
    pub fn reward(&self, id: u32, a: u16) -> f64 {
        self.rewards[id as usize * self.na + a as usize]
    }

    /// Interns `b`, checking on first sight that its support states agree on
    /// every action's reward.
    pub fn intern(&mut self, b: &Belief, model: &Pomdp) -> Result<u32, RiskError> {
        let bits: Vec<u64> = b.as_slice().iter().map(|p| p.to_bits()).collect();
        if let Some(&id) = self.index.get(bits.as_slice()) {
            return Ok(id);
        }
        let id = self.beliefs.len() as u32;
        for a in 0..self.na {
            let mut first: Option<f64> = None;
            for s in b.support() {
                let r = model.reward(s, ActionId(a as u16));
                match first {
                    None => first = Some(r),
                    Some(r0) if (r - r0).abs() > REWARD_TOL => {
                        return Err(RiskError::RewardMismatch {
                            action: a as u16,
                            first: r0,
                            second: r,
                        });
                    }
                    Some(_) => {}
                }
            }
            self.rewards.push(first.unwrap_or(0.0));
        }
        self.beliefs.push(b.clone());
        self.index.insert(bits.into_boxed_slice(), id);
        Ok(id)
    }

    /// Posterior belief and probability of observing `o` after `a`, or
    /// `None` when the observation has (numerically) zero probability.
    pub fn child(
        &mut self,
        id: u32,
        a: u16,
        o: u16,
        model: &Pomdp,
    ) -> Result<Option<(u32, f64)>, RiskError> {
        let key = ((id as u64) << 32) | ((a as u64) << 16) | o as u64;
        if let Some(&(child, p)) = self.children.get(&key) {
            return Ok(if child == NO_CLASS {
                None
            } else {
                Some((child, p))
            });
        }
        let entry = match belief_update_full(model, self.get(id), ActionId(a), ObsId(o)) {
            Ok((posterior, p)) if p > PROB_FLOOR => {
                let child = self.intern(&posterior, model)?;
                Some((child, p))
            }
            Ok(_) | Err(ModelError::ZeroProbabilityObservation { .. }) => None,
            Err(e) => return Err(RiskError::BeliefUpdate(e)),
        };
        self.children.insert(key, entry.unwrap_or((NO_CLASS, 0.0)));
        Ok(entry)
    }
}

/// One recorded observation branch of an expanded node.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub a: u16,
    pub o: u16,
    pub child: u32,
    pub p: f64,
}

struct ExpNode {
    belief: u32,
    depth: u16,
    pay: f64,
    u: f64,
    /// All positive-probability one-step extensions have been interned.
    expanded: bool,
    /// A safe play ends here (depth equals the horizon, payoff >= thr).
    safe_leaf: bool,
    edges: Vec<Edge>,
    parents: Vec<u32>,
}

impl ExpNode {
    fn new(belief: u32, depth: u16, pay: f64) -> Self {
        ExpNode {
            belief,
            depth,
            pay,
            u: 1.0,
            expanded: false,
            safe_leaf: false,
            edges: Vec::new(),
            parents: Vec::new(),
        }
    }

    /// A node contributes to risk bounds once it is itself recorded: either
    /// a safe leaf or an expanded interior node of some recorded play.
    fn contentful(&self) -> bool {
        self.safe_leaf || self.expanded
    }
}

pub struct ExplicitTree {
    na: usize,
    nz: usize,
    gamma: f64,
    gpow: Vec<f64>,
    thr: f64,
    horizon: usize,
    beliefs: BeliefTable,
    nodes: Vec<ExpNode>,
    index: FastMap<(u32, u16, u64), u32>,
    /// Search-tree nodes linked to each explicit node.
    members: Vec<Vec<u32>>,
    /// Visit-pooled return statistics per (node, action), flattened.
    pooled_n: Vec<u64>,
    pooled_v: Vec<f64>,
    root: u32,
    work: Vec<u32>,
    acc: Vec<f64>,
    suffix: Vec<f64>,
    sweep: Vec<(u16, u16, u32)>,
}

impl ExplicitTree {
    /// Starts an empty tree rooted at `root_belief` with `horizon` decisions
    /// remaining and safety threshold `thr`, and links the search root to the
    /// explicit root.
    pub fn new(
        model: &Pomdp,
        root_belief: &Belief,
        thr: f64,
        horizon: usize,
        search: &mut SearchTree,
    ) -> Result<Self, RiskError> {
        assert!(horizon >= 1, "at least one decision step is required");
        assert!(horizon <= u16::MAX as usize, "horizon exceeds u16 depth");
        let na = model.num_actions();
        let mut beliefs = BeliefTable::new(na);
        let belief = beliefs.intern(root_belief, model)?;
        let mut gpow = Vec::with_capacity(horizon + 1);
        let mut g = 1.0;
        for _ in 0..=horizon {
            gpow.push(g);
            g *= model.discount();
        }
        let mut tree = ExplicitTree {
            na,
            nz: model.num_observations(),
            gamma: model.discount(),
            gpow,
            thr,
            horizon,
            beliefs,
            nodes: Vec::new(),
            index: FastMap::default(),
            members: Vec::new(),
            pooled_n: Vec::new(),
            pooled_v: Vec::new(),
            root: 0,
            work: Vec::new(),
            acc: Vec::new(),
            suffix: Vec::new(),
            sweep: Vec::new(),
        };
        tree.root = tree.intern_node(belief, 0, 0.0);
        tree.assign(tree.root, search.root(), search);
        Ok(tree)
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn root_u(&self) -> f64 {
        self.nodes[self.root as usize].u
    }

    pub fn u(&self, node: u32) -> f64 {
        self.nodes[node as usize].u
    }

    pub fn thr(&self) -> f64 {
        self.thr
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> f64 {
        self.gamma
    }

    pub fn disc_pow(&self, depth: usize) -> f64 {
        self.gpow[depth]
    }

    pub fn num_actions(&self) -> usize {
        self.na
    }

    pub fn num_observations(&self) -> usize {
        self.nz
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self, node: u32) -> usize {
        self.nodes[node as usize].depth as usize
    }

    /// Root-relative discounted payoff accumulated on the way to this node.
    pub fn payoff(&self, node: u32) -> f64 {
        self.nodes[node as usize].pay
    }

    pub fn belief(&self, node: u32) -> &Belief {
        self.beliefs.get(self.nodes[node as usize].belief)
    }

    pub fn is_safe_leaf(&self, node: u32) -> bool {
        self.nodes[node as usize].safe_leaf
    }

    pub fn is_expanded(&self, node: u32) -> bool {
        self.nodes[node as usize].expanded
    }

    pub fn is_contentful(&self, node: u32) -> bool {
        self.nodes[node as usize].contentful()
    }

    pub fn edges(&self, node: u32) -> &[Edge] {
        &self.nodes[node as usize].edges
    }

    pub fn edge_child(&self, node: u32, a: u16, o: u16) -> Option<&Edge> {
        self.nodes[node as usize]
            .edges
            .iter()
            .find(|e| e.a == a && e.o == o)
    }

    /// The (observable) reward every support state pays at this node.
    pub fn reward(&self, node: u32, a: u16) -> f64 {
        self.beliefs.reward(self.nodes[node as usize].belief, a)
    }

    /// Risk bound of playing `a` here: `1 - sum p * (1 - U(child))` over
    /// recorded children, or `None` when the action has none.
    pub fn u_action(&self, node: u32, a: u16) -> Option<f64> {
        let mut sum = 0.0;
        let mut any = false;
        for e in &self.nodes[node as usize].edges {
            if e.a == a && self.nodes[e.child as usize].contentful() {
                any = true;
                sum += e.p * (1.0 - self.nodes[e.child as usize].u);
            }
        }
        any.then(|| (1.0 - sum).clamp(0.0, 1.0))
    }

    /// Actions with at least one recorded child.
    pub fn allowed_actions(&self, node: u32) -> Vec<u16> {
        (0..self.na as u16)
            .filter(|&a| self.u_action(node, a).is_some())
            .collect()
    }

    /// Pooled `(visits, mean return)` over all simulations through search
    /// nodes linked here that played `a`.
    pub fn pooled(&self, node: u32, a: u16) -> (u64, f64) {
        let i = node as usize * self.na + a as usize;
        (self.pooled_n[i], self.pooled_v[i])
    }

    /// Best pooled mean return at this node, 0 when never visited. Used as
    /// the terminal value of unexpanded nodes in downstream planning.
    pub fn frontier_value(&self, node: u32) -> f64 {
        let base = node as usize * self.na;
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.na {
            if self.pooled_n[base + a] > 0 {
                best = best.max(self.pooled_v[base + a]);
            }
        }
        if best == f64::NEG_INFINITY {
            0.0
        } else {
            best
        }
    }

    /// Overrides the pooled estimate for `(node, a)` with a single synthetic
    /// visit of value `v` (diagnostics and controlled evaluations).
    pub fn seed_action_value(&mut self, node: u32, a: u16, v: f64) {
        let i = node as usize * self.na + a as usize;
        self.pooled_n[i] = 1;
        self.pooled_v[i] = v;
    }

    fn intern_node(&mut self, belief: u32, depth: u16, pay: f64) -> u32 {
        let key = (belief, depth, pay.to_bits());
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(ExpNode::new(belief, depth, pay));
        self.members.push(Vec::new());
        self.pooled_n.resize(self.pooled_n.len() + self.na, 0);
        self.pooled_v.resize(self.pooled_v.len() + self.na, 0.0);
        self.index.insert(key, id);
        id
    }

    /// Links a search node to `node`, folding its accumulated statistics
    /// into the pooled estimates exactly once.
    fn assign(&mut self, node: u32, search_node: u32, search: &mut SearchTree) {
        debug_assert_eq!(search.class(search_node), NO_CLASS);
        search.set_class(search_node, node);
        self.members[node as usize].push(search_node);
        for a in 0..self.na as u16 {
            let n = search.action_visits(search_node, a);
            if n > 0 {
                self.merge_pooled(node, a, n as u64, search.action_value(search_node, a));
            }
        }
    }

    fn merge_pooled(&mut self, node: u32, a: u16, add_n: u64, add_v: f64) {
        let i = node as usize * self.na + a as usize;
        self.pooled_n[i] += add_n;
        self.pooled_v[i] += (add_v - self.pooled_v[i]) * add_n as f64 / self.pooled_n[i] as f64;
    }

    /// Accumulates one fresh simulated return into the pooled estimate.
    #[inline]
    pub fn record_return(&mut self, node: u32, a: u16, ret: f64) {
        let i = node as usize * self.na + a as usize;
        self.pooled_n[i] += 1;
        self.pooled_v[i] += (ret - self.pooled_v[i]) / self.pooled_n[i] as f64;
    }

    /// Interns every positive-probability one-step extension of `node` and
    /// links any search-tree children of its members to the new nodes.
    fn expand(
        &mut self,
        node: u32,
        model: &Pomdp,
        search: &mut SearchTree,
    ) -> Result<(), RiskError> {
        debug_assert!(!self.nodes[node as usize].expanded);
        debug_assert!(self.depth(node) < self.horizon);
        let belief = self.nodes[node as usize].belief;
        let depth = self.nodes[node as usize].depth;
        let pay = self.nodes[node as usize].pay;
        let gp = self.gpow[depth as usize];
        for a in 0..self.na as u16 {
            let pay2 = pay + gp * self.beliefs.reward(belief, a);
            for o in 0..self.nz as u16 {
                if let Some((b2, p)) = self.beliefs.child(belief, a, o, model)? {
                    let child = self.intern_node(b2, depth + 1, pay2);
                    self.nodes[node as usize]
                        .edges
                        .push(Edge { a, o, child, p });
                    self.nodes[child as usize].parents.push(node);
                }
            }
        }
        self.nodes[node as usize].expanded = true;
        // Search children of members that could not be linked before this
        // node was expanded can be linked now.
        let member_list = std::mem::take(&mut self.members[node as usize]);
        for &m in &member_list {
            self.sweep.clear();
            self.sweep.extend(search.children(m));
            for i in 0..self.sweep.len() {
                let (a, o, sc) = self.sweep[i];
                if search.class(sc) == NO_CLASS {
                    if let Some(e) = self.edge_child(node, a, o) {
                        let child = e.child;
                        self.assign(child, sc, search);
                    }
                }
            }
        }
        self.members[node as usize] = member_list;
        Ok(())
    }

    /// Links the search child reached by `(a, o)` from a search node living
    /// at `parent` to the matching explicit child, if `parent` is expanded.
    pub fn adopt(
        &mut self,
        parent: u32,
        a: u16,
        o: u16,
        search_child: u32,
        search: &mut SearchTree,
    ) {
        if !self.nodes[parent as usize].expanded {
            return;
        }
        if let Some(e) = self.edge_child(parent, a, o) {
            let child = e.child;
            self.assign(child, search_child, search);
        }
    }

    /// Records one threshold-meeting play. The path's interior nodes are
    /// expanded, the final node is marked safe, risk bounds are refreshed,
    /// and any search-tree prefix missing along the path is created with its
    /// statistics initialized from the play's own suffix returns.
    pub fn insert_safe_path(
        &mut self,
        path: &[(u16, u16, f64)],
        search: &mut SearchTree,
        model: &Pomdp,
    ) -> Result<(), RiskError> {
        debug_assert_eq!(path.len(), self.horizon);
        self.suffix.resize(path.len() + 1, 0.0);
        self.suffix[path.len()] = 0.0;
        for i in (0..path.len()).rev() {
            self.suffix[i] = path[i].2 + self.gamma * self.suffix[i + 1];
        }
        self.work.clear();
        let mut node = self.root;
        let mut snode = search.root();
        for (i, &(a, o, r)) in path.iter().enumerate() {
            let expected = self.beliefs.reward(self.nodes[node as usize].belief, a);
            if (r - expected).abs() > REWARD_TOL {
                return Err(RiskError::RewardDrift {
                    action: a,
                    got: r,
                    expected,
                });
            }
            if !self.nodes[node as usize].expanded {
                self.expand(node, model, search)?;
                // Expansion is the only event that can move this node's
                // bound (shared children may already carry bounds below 1);
                // a node that merely became contentful still covers zero
                // mass, so ancestors only move when a refreshed bound
                // propagates to them.
                self.work.push(node);
            }
            let edge = self
                .edge_child(node, a, o)
                .copied()
                .ok_or(RiskError::BeliefUpdate(
                    ModelError::ZeroProbabilityObservation { action: a, obs: o },
                ))?;
            let (schild, created) = search.child_or_insert(snode, a, o);
            if created && i + 1 < path.len() {
                let suffix = self.suffix[i + 1];
                search.backup(schild, path[i + 1].0, suffix);
            }
            if search.class(schild) == NO_CLASS {
                self.assign(edge.child, schild, search);
            } else {
                debug_assert_eq!(search.class(schild), edge.child);
            }
            node = edge.child;
            snode = schild;
        }
        if !self.nodes[node as usize].safe_leaf {
            debug_assert_eq!(self.depth(node), self.horizon);
            debug_assert!(self.nodes[node as usize].pay >= self.thr - 1e-9);
            self.nodes[node as usize].safe_leaf = true;
            self.work.push(node);
        }
        self.refresh_u();
        Ok(())
    }

    fn fresh_u(&self, node: u32, acc: &mut [f64]) -> f64 {
        let n = &self.nodes[node as usize];
        if n.safe_leaf {
            return 0.0;
        }
        acc.fill(-1.0);
        for e in &n.edges {
            let child = &self.nodes[e.child as usize];
            if child.contentful() {
                let slot = &mut acc[e.a as usize];
                if *slot < 0.0 {
                    *slot = 0.0;
                }
                *slot += e.p * (1.0 - child.u);
            }
        }
        let mut best: f64 = 1.0;
        for &covered in acc.iter() {
            if covered >= 0.0 {
                best = best.min(1.0 - covered);
            }
        }
        best.clamp(0.0, 1.0)
    }

    /// Propagates risk-bound changes from the queued nodes toward the root.
    fn refresh_u(&mut self) {
        let mut work = std::mem::take(&mut self.work);
        let mut acc = std::mem::take(&mut self.acc);
        acc.resize(self.na, 0.0);
        while let Some(node) = work.pop() {
            let new_u = self.fresh_u(node, &mut acc);
            let old = self.nodes[node as usize].u;
            if new_u != old {
                debug_assert!(
                    new_u <= old + 1e-9,
                    "risk bound increased from {old} to {new_u}"
                );
                self.nodes[node as usize].u = new_u;
                work.extend_from_slice(&self.nodes[node as usize].parents);
            }
        }
        self.work = work;
        self.acc = acc;
    }

    /// Recomputes every node's risk bound from scratch; the incremental
    /// bounds must match this (cross-check for tests and diagnostics).
    pub fn recompute_risk(&self) -> f64 {
        let mut order: Vec<u32> = (0..self.nodes.len() as u32).collect();
        order.sort_by_key(|&c| std::cmp::Reverse(self.nodes[c as usize].depth));
        let mut fresh = vec![1.0; self.nodes.len()];
        let mut acc = vec![0.0; self.na];
        for &c in &order {
            let n = &self.nodes[c as usize];
            if n.safe_leaf {
                fresh[c as usize] = 0.0;
                continue;
            }
            acc.fill(-1.0);
            for e in &n.edges {
                let child = &self.nodes[e.child as usize];
                if child.contentful() {
                    let slot = &mut acc[e.a as usize];
                    if *slot < 0.0 {
                        *slot = 0.0;
                    }
                    *slot += e.p * (1.0 - fresh[e.child as usize]);
                }
            }
            let mut best: f64 = 1.0;
            for &covered in acc.iter() {
                if covered >= 0.0 {
                    best = best.min(1.0 - covered);
                }
            }
            fresh[c as usize] = best.clamp(0.0, 1.0);
        }
        fresh[self.root as usize]
    }

    /// Re-roots the tree at the `(a, o)` child after that step was played:
    /// depths shift down by one, payoffs are re-based to the new root, the
    /// threshold is shifted by the received reward, and search-tree links
    /// are rewritten through `search_remap` (the mapping returned by the
    /// search tree's own prune).
    pub fn prune(
        &mut self,
        a: ActionId,
        o: ObsId,
        new_belief: &Belief,
        model: &Pomdp,
        search: &mut SearchTree,
        search_remap: &[u32],
    ) -> Result<(), RiskError> {
        assert!(self.horizon >= 2, "cannot re-root past the final decision");
        let r0 = self
            .beliefs
            .reward(self.nodes[self.root as usize].belief, a.0);
        let new_thr = shift_threshold(self.thr, r0, self.gamma);
        let survivor_root = self.edge_child(self.root, a.0, o.0).map(|e| e.child);
        let mut class_remap: FastMap<u32, u32> = FastMap::default();
        let mut nodes = Vec::new();
        let mut members: Vec<Vec<u32>> = Vec::new();
        let mut pooled_n = Vec::new();
        let mut pooled_v = Vec::new();
        let mut index: FastMap<(u32, u16, u64), u32> = FastMap::default();
        if let Some(start) = survivor_root {
            let mut queue = vec![start];
            class_remap.insert(start, 0);
            let mut head = 0;
            while head < queue.len() {
                let old = queue[head];
                head += 1;
                for e in &self.nodes[old as usize].edges {
                    if let std::collections::hash_map::Entry::Vacant(slot) =
                        class_remap.entry(e.child)
                    {
                        slot.insert(queue.len() as u32);
                        queue.push(e.child);
                    }
                }
            }
            for &old in &queue {
                let src = &self.nodes[old as usize];
                let pay = (src.pay - r0) / self.gamma;
                let mut node = ExpNode::new(src.belief, src.depth - 1, pay);
                node.u = src.u;
                node.expanded = src.expanded;
                node.safe_leaf = src.safe_leaf;
                node.edges = src
                    .edges
                    .iter()
                    .map(|e| Edge {
                        child: class_remap[&e.child],
                        ..*e
                    })
                    .collect();
                let id = nodes.len() as u32;
                index
                    .entry((node.belief, node.depth, node.pay.to_bits()))
                    .or_insert(id);
                nodes.push(node);
                let mut kept: Vec<u32> = self.members[old as usize]
                    .iter()
                    .filter_map(|&m| {
                        let nm = search_remap[m as usize];
                        (nm != u32::MAX).then_some(nm)
                    })
                    .collect();
                kept.shrink_to_fit();
                members.push(kept);
                let base = old as usize * self.na;
                pooled_n.extend_from_slice(&self.pooled_n[base..base + self.na]);
                pooled_v.extend_from_slice(&self.pooled_v[base..base + self.na]);
            }
            for id in 0..nodes.len() as u32 {
                for i in 0..nodes[id as usize].edges.len() {
                    let child = nodes[id as usize].edges[i].child;
                    nodes[child as usize].parents.push(id);
                }
            }
            debug_assert_eq!(nodes[0].depth, 0);
        }
        self.nodes = nodes;
        self.members = members;
        self.pooled_n = pooled_n;
        self.pooled_v = pooled_v;
        self.index = index;
        self.thr = new_thr;
        self.horizon -= 1;
        self.gpow.truncate(self.horizon + 1);
        self.root = 0;
        search.remap_classes(&class_remap);
        if self.nodes.is_empty() {
            let belief = self.beliefs.intern(new_belief, model)?;
            self.root = self.intern_node(belief, 0, 0.0);
        } else if cfg!(debug_assertions) {
            let expect = self.beliefs.intern(new_belief, model)?;
            debug_assert_eq!(self.nodes[self.root as usize].belief, expect);
        }
        if search.class(search.root()) == NO_CLASS {
            self.assign(self.root, search.root(), search);
        }
        Ok(())
    }

    /// Human-readable dump of the recorded tree (diagnostics).
    pub fn dump(&self, model: &Pomdp) -> String {
        let mut out = String::new();
        let mut queue = vec![self.root];
        let mut seen: FastMap<u32, ()> = FastMap::default();
        seen.insert(self.root, ());
        let mut head = 0;
        while head < queue.len() {
            let c = queue[head];
            head += 1;
            let n = &self.nodes[c as usize];
            let kind = if n.safe_leaf {
                "safe"
            } else if n.expanded {
                "interior"
            } else {
                "frontier"
            };
            let _ = writeln!(
                out,
                "node {} depth {} pay {:.6} u {:.6} {} members {}",
                c,
                n.depth,
                n.pay,
                n.u,
                kind,
                self.members[c as usize].len()
            );
            for e in &n.edges {
                let _ = writeln!(
                    out,
                    "  {} / {} p {:.6} -> node {}",
                    model.action_name(ActionId(e.a)),
                    model.obs_name(ObsId(e.o)),
                    e.p,
                    e.child
                );
                if seen.insert(e.child, ()).is_none() {
                    queue.push(e.child);
                }
            }
        }
        out
    }
}
