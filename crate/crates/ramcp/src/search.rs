//! POMCP-style search tree and the simulation procedures that grow it.
//!
//! The tree is an arena of nodes addressed by `u32` ids; children hang off
//! their parent in an intrusive sibling list, so growing the tree never
//! allocates per node beyond the arena vectors themselves. Per-action visit
//! counts and value estimates live in flat arrays indexed `node * na + a`.
//!
//! [`SimContext::simulate_from`] runs one simulation: UCB descent through
//! the tree, a uniform rollout below it, incremental-mean backups on the way
//! out — and, whenever the completed play meets the safety threshold, the
//! play is recorded in the explicit risk tree.

use crate::model::{Pomdp, StateId};
use crate::risk::{ExplicitTree, RiskError, NO_CLASS};
use crate::sampler::{mix, Stream};
use std::hash::{BuildHasherDefault, Hasher};

pub(crate) const NONE: u32 = u32::MAX;

/// Hashes small integer keys by splitmix64 folding; the planner's hot maps
/// are keyed by packed ids, where siphash would dominate the lookup cost.
#[derive(Default)]
pub(crate) struct MixHasher(u64);

impl Hasher for MixHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(buf));
        }
    }

    fn write_u8(&mut self, i: u8) {
        self.write_u64(i as u64);
    }

    fn write_u16(&mut self, i: u16) {
        self.write_u64(i as u64);
    }

    fn write_u32(&mut self, i: u32) {
        self.write_u64(i as u64);
    }

    fn write_u64(&mut self, i: u64) {
        self.0 = mix(self.0 ^ i);
    }

    fn write_usize(&mut self, i: usize) {
        self.write_u64(i as u64);
    }
}

pub(crate) type FastMap<K, V> = std::collections::HashMap<K, V, BuildHasherDefault<MixHasher>>;

/// 24 bytes; particle reservoirs live in side tables that stay empty when
/// particles are disabled, so the hot descent touches only dense data.
struct Node {
    n: u32,
    /// Explicit-tree node this history belongs to, or [`NO_CLASS`].
    class: u32,
    first_child: u32,
    next_sibling: u32,
    edge_a: u16,
    edge_o: u16,
}

impl Node {
    fn new(edge_a: u16, edge_o: u16) -> Self {
        Node {
            n: 0,
            class: NO_CLASS,
            first_child: NONE,
            next_sibling: NONE,
            edge_a,
            edge_o,
        }
    }
}

pub struct SearchTree {
    na: usize,
    particle_cap: usize,
    nodes: Vec<Node>,
    n_a: Vec<u32>,
    v_a: Vec<f64>,
    /// Per-node state reservoirs; empty vectors when `particle_cap == 0`.
    particles: Vec<Vec<u16>>,
    /// States offered to each reservoir (= simulations through the node).
    offers: Vec<u32>,
    /// `log_lut[n] = ln(n)`, grown lazily; visit counts rise by one per
    /// backup, so extending costs O(1) amortized and saves a `ln` per
    /// selection.
    log_lut: Vec<f64>,
}

impl SearchTree {
    pub fn new(num_actions: usize, particle_cap: usize) -> Self {
        let mut tree = SearchTree {
            na: num_actions,
            particle_cap,
            nodes: Vec::new(),
            n_a: Vec::new(),
            v_a: Vec::new(),
            particles: Vec::new(),
            offers: Vec::new(),
            log_lut: vec![0.0; 2],
        };
        tree.push_node(Node::new(u16::MAX, u16::MAX));
        tree
    }

    fn push_node(&mut self, node: Node) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        self.n_a.resize(self.n_a.len() + self.na, 0);
        self.v_a.resize(self.v_a.len() + self.na, 0.0);
        if self.particle_cap > 0 {
            self.particles.push(Vec::new());
            self.offers.push(0);
        }
        id
    }

    pub fn root(&self) -> u32 {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the root always exists
    }

    pub fn num_actions(&self) -> usize {
        self.na
    }

    pub fn child(&self, node: u32, a: u16, o: u16) -> Option<u32> {
        let mut c = self.nodes[node as usize].first_child;
        while c != NONE {
            let n = &self.nodes[c as usize];
            if n.edge_a == a && n.edge_o == o {
                return Some(c);
            }
            c = n.next_sibling;
        }
        None
    }

    /// Returns the `(a, o)` child, creating it if absent; the flag says
    /// whether it was created by this call.
    pub fn child_or_insert(&mut self, node: u32, a: u16, o: u16) -> (u32, bool) {
        if let Some(c) = self.child(node, a, o) {
            return (c, false);
        }
        let mut fresh = Node::new(a, o);
        fresh.next_sibling = self.nodes[node as usize].first_child;
        let id = self.push_node(fresh);
        self.nodes[node as usize].first_child = id;
        (id, true)
    }

    pub fn children(&self, node: u32) -> ChildIter<'_> {
        ChildIter {
            tree: self,
            cur: self.nodes[node as usize].first_child,
        }
    }

    pub fn visits(&self, node: u32) -> u32 {
        self.nodes[node as usize].n
    }

    pub fn action_visits(&self, node: u32, a: u16) -> u32 {
        self.n_a[node as usize * self.na + a as usize]
    }

    pub fn action_value(&self, node: u32, a: u16) -> f64 {
        self.v_a[node as usize * self.na + a as usize]
    }

    pub(crate) fn class(&self, node: u32) -> u32 {
        self.nodes[node as usize].class
    }

    pub(crate) fn set_class(&mut self, node: u32, class: u32) {
        self.nodes[node as usize].class = class;
    }

    /// Records one simulated return through `node` taking `a`: visit counts
    /// increment and `V_a` moves by the incremental-mean rule.
    #[inline]
    pub fn backup(&mut self, node: u32, a: u16, ret: f64) {
        self.nodes[node as usize].n += 1;
        let i = node as usize * self.na + a as usize;
        self.n_a[i] += 1;
        self.v_a[i] += (ret - self.v_a[i]) / self.n_a[i] as f64;
    }

    /// UCB1 action choice: `argmax V_a + k * sqrt(ln N / N_a)`. Untried
    /// actions score infinity; all ties break to the lowest index. Takes
    /// `&mut self` only to grow the logarithm table.
    pub fn ucb_select(&mut self, node: u32, k: f64) -> u16 {
        let base = node as usize * self.na;
        let mut best = 0u16;
        let mut best_score = f64::NEG_INFINITY;
        let n = self.nodes[node as usize].n.max(1) as usize;
        while self.log_lut.len() <= n {
            self.log_lut.push((self.log_lut.len() as f64).ln());
        }
        let log_n = self.log_lut[n];
        for a in 0..self.na {
            let n_a = self.n_a[base + a];
            if n_a == 0 {
                return a as u16;
            }
            let score = self.v_a[base + a] + k * (log_n / n_a as f64).sqrt();
            if score > best_score {
                best_score = score;
                best = a as u16;
            }
        }
        best
    }

    /// Offers a state to the node's particle reservoir.
    #[inline]
    pub fn add_particle(&mut self, node: u32, s: u16, stream: &mut Stream) {
        if self.particle_cap == 0 {
            return;
        }
        let i = node as usize;
        self.offers[i] += 1;
        if self.particles[i].len() < self.particle_cap {
            self.particles[i].push(s);
        } else {
            let j = (stream.next_u64() % self.offers[i] as u64) as usize;
            if j < self.particle_cap {
                self.particles[i][j] = s;
            }
        }
    }

    pub fn particles(&self, node: u32) -> &[u16] {
        self.particles.get(node as usize).map_or(&[], Vec::as_slice)
    }

    /// Makes the `(a, o)` child the new root, dropping everything outside
    /// its subtree (a fresh empty root if the child does not exist). Returns
    /// the old-id to new-id mapping, [`u32::MAX`] for dropped nodes.
    pub fn prune(&mut self, a: u16, o: u16) -> Vec<u32> {
        let mut remap = vec![NONE; self.nodes.len()];
        let mut fresh = SearchTree::new(self.na, self.particle_cap);
        if let Some(old_root) = self.child(self.root(), a, o) {
            // The fresh constructor made a root; rebuild it from the child.
            fresh.nodes.clear();
            fresh.n_a.clear();
            fresh.v_a.clear();
            fresh.particles.clear();
            fresh.offers.clear();
            let mut queue = vec![old_root];
            let mut head = 0;
            while head < queue.len() {
                let old = queue[head];
                head += 1;
                let mut c = self.nodes[old as usize].first_child;
                while c != NONE {
                    queue.push(c);
                    c = self.nodes[c as usize].next_sibling;
                }
            }
            for (new_id, &old) in queue.iter().enumerate() {
                remap[old as usize] = new_id as u32;
            }
            for &old in &queue {
                let o_node = &self.nodes[old as usize];
                let mut node = Node::new(o_node.edge_a, o_node.edge_o);
                node.n = o_node.n;
                node.class = o_node.class;
                node.first_child = if o_node.first_child == NONE {
                    NONE
                } else {
                    remap[o_node.first_child as usize]
                };
                node.next_sibling = if o_node.next_sibling == NONE || old == old_root {
                    NONE
                } else {
                    remap[o_node.next_sibling as usize]
                };
                let id = fresh.push_node(node);
                if self.particle_cap > 0 {
                    fresh.particles[id as usize] =
                        std::mem::take(&mut self.particles[old as usize]);
                    fresh.offers[id as usize] = self.offers[old as usize];
                }
                let (old_base, new_base) = (old as usize * self.na, id as usize * self.na);
                fresh.n_a[new_base..new_base + self.na]
                    .copy_from_slice(&self.n_a[old_base..old_base + self.na]);
                fresh.v_a[new_base..new_base + self.na]
                    .copy_from_slice(&self.v_a[old_base..old_base + self.na]);
            }
            // The new root has no incoming edge.
            fresh.nodes[0].edge_a = u16::MAX;
            fresh.nodes[0].edge_o = u16::MAX;
        }
        *self = fresh;
        remap
    }

    /// Rewrites every node's explicit-tree link through `remap`.
    pub(crate) fn remap_classes(&mut self, remap: &FastMap<u32, u32>) {
        for node in &mut self.nodes {
            if node.class != NO_CLASS {
                node.class = remap.get(&node.class).copied().unwrap_or(NO_CLASS);
            }
        }
    }
}

pub struct ChildIter<'a> {
    tree: &'a SearchTree,
    cur: u32,
}

impl Iterator for ChildIter<'_> {
    /// `(action, observation, child id)`
    type Item = (u16, u16, u32);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cur == NONE {
            return None;
        }
        let node = &self.tree.nodes[self.cur as usize];
        let item = (node.edge_a, node.edge_o, self.cur);
        self.cur = node.next_sibling;
        Some(item)
    }
}

/// One planning step's simulation engine: borrows the model, both trees and
/// the exploration constant, and runs simulations from the shared root.
pub struct SimContext<'a> {
    pub model: &'a Pomdp,
    pub search: &'a mut SearchTree,
    pub tree: &'a mut ExplicitTree,
    pub k: f64,
    path: Vec<(u16, u16, f64)>,
    /// `(node, action)` per descended level; reused across simulations.
    spine: Vec<(u32, u16)>,
}

impl<'a> SimContext<'a> {
    pub fn new(
        model: &'a Pomdp,
        search: &'a mut SearchTree,
        tree: &'a mut ExplicitTree,
        k: f64,
    ) -> Self {
        SimContext {
            model,
            search,
            tree,
            k,
            path: Vec::new(),
            spine: Vec::new(),
        }
    }

    /// Runs one simulation from the root with initial hidden state `s`:
    /// UCB descent through visited nodes, a uniform rollout below the first
    /// fresh one, threshold-meeting plays recorded, returns backed up on the
    /// way out.
    pub fn simulate_from(&mut self, s: StateId, stream: &mut Stream) -> Result<f64, RiskError> {
        self.path.clear();
        self.spine.clear();
        let horizon = self.tree.horizon();
        let gamma = self.model.discount();
        self.search.add_particle(0, s.0, stream);

        let mut node = self.search.root();
        let mut state = s;
        let mut pay = 0.0;
        let mut disc = 1.0;
        let mut fresh = false;
        while self.path.len() < horizon && !fresh {
            let a = self.search.ucb_select(node, self.k);
            let (s2, o, r) = stream.sample_step(self.model, state, crate::model::ActionId(a));
            self.path.push((a, o.0, r));
            let (child, created) = self.search.child_or_insert(node, a, o.0);
            let parent_class = self.search.class(node);
            if parent_class != NO_CLASS && self.search.class(child) == NO_CLASS {
                self.tree.adopt(parent_class, a, o.0, child, self.search);
            }
            self.search.add_particle(child, s2.0, stream);
            self.spine.push((node, a));
            node = child;
            state = s2;
            pay += disc * r;
            disc *= gamma;
            fresh = created;
        }

        // The play below the spine: a rollout below the first fresh node, or
        // the already-complete play when the descent reached the horizon.
        // Recording happens before the backups, exactly as if each level
        // returned after its recursive call.
        let rollout_levels = horizon - self.path.len();
        if rollout_levels > 0 {
            self.rollout(state, rollout_levels, pay, disc, stream)?;
        } else if pay >= self.tree.thr() {
            // A play ending on an already-recorded safe leaf is fully
            // recorded; re-inserting it would change nothing.
            let class = self.search.class(node);
            if class == NO_CLASS || !self.tree.is_safe_leaf(class) {
                self.tree
                    .insert_safe_path(&self.path, self.search, self.model)?;
            }
        }

        let mut sub = 0.0;
        for depth in (self.spine.len()..self.path.len()).rev() {
            sub = self.path[depth].2 + gamma * sub;
        }
        for depth in (0..self.spine.len()).rev() {
            let (level_node, a) = self.spine[depth];
            let ret = self.path[depth].2 + gamma * sub;
            self.search.backup(level_node, a, ret);
            // Re-read: the safe-path insertion may have linked this node to
            // the explicit tree (folding its pre-backup statistics), in
            // which case this return must still reach the pooled estimate.
            let class = self.search.class(level_node);
            if class != NO_CLASS {
                self.tree.record_return(class, a, ret);
            }
            sub = ret;
        }
        Ok(sub)
    }

    /// Plays `n` uniformly random actions, extending `self.path`, and
    /// records the completed play when it meets the threshold.
    fn rollout(
        &mut self,
        s: StateId,
        n: usize,
        pay: f64,
        disc: f64,
        stream: &mut Stream,
    ) -> Result<(), RiskError> {
        let gamma = self.model.discount();
        let mut state = s;
        let mut pay = pay;
        let mut disc = disc;
        for _ in 0..n {
            let a = (stream.next_u64() % self.search.num_actions() as u64) as u16;
            let (s2, o, r) = stream.sample_step(self.model, state, crate::model::ActionId(a));
            self.path.push((a, o.0, r));
            pay += disc * r;
            disc *= gamma;
            state = s2;
        }
        if pay >= self.tree.thr() {
            self.tree
                .insert_safe_path(&self.path, self.search, self.model)?;
        }
        Ok(())
    }
}
