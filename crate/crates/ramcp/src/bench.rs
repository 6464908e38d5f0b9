//! Built-in benchmark models.
//!
//! All models here keep rewards observable: whenever two states can sit in
//! the same belief support, their reward rows agree, so the agent always
//! knows the reward it just collected. Domains that traditionally pay a
//! reward for an outcome the agent cannot see (tiger, hallway tasks) are
//! rephrased with short-lived *signal states*: the outcome moves the system
//! into a state that emits a distinctive observation and pays the reward on
//! the following step.

use crate::model::{ActionId, ObsId, Pomdp, PomdpParts, StateId};
use crate::sampler::RandomSource;
use thiserror::Error;

/// Names accepted by [`by_name`].
pub fn builtin_names() -> &'static [&'static str] {
    &["tiger", "gamble", "hallway-3x3", "hallway-3x3-mdp"]
}

pub fn by_name(name: &str) -> Option<Pomdp> {
    match name {
        "tiger" => Some(gen_tiger()),
        "gamble" => Some(gen_example1()),
        "hallway-3x3" => Some(hallway_3x3()),
        "hallway-3x3-mdp" => Some(with_identity_observations(&hallway_3x3())),
        _ => None,
    }
}

pub fn state_named(m: &Pomdp, name: &str) -> StateId {
    m.states()
        .find(|&s| m.state_name(s) == name)
        .unwrap_or_else(|| panic!("no state named '{name}'"))
}

pub fn action_named(m: &Pomdp, name: &str) -> ActionId {
    m.actions()
        .find(|&a| m.action_name(a) == name)
        .unwrap_or_else(|| panic!("no action named '{name}'"))
}

pub fn obs_named(m: &Pomdp, name: &str) -> ObsId {
    m.observations()
        .find(|&o| m.obs_name(o) == name)
        .unwrap_or_else(|| panic!("no observation named '{name}'"))
}

/// Replaces the observation model with one observation per state, turning a
/// POMDP into its fully observable counterpart.
pub fn with_identity_observations(m: &Pomdp) -> Pomdp {
    let ns = m.num_states();
    let mut observation = vec![0.0; ns * ns];
    for i in 0..ns {
        observation[i * ns + i] = 1.0;
    }
    let mut transition = Vec::with_capacity(ns * m.num_actions() * ns);
    for s in m.states() {
        for a in m.actions() {
            transition.extend_from_slice(m.transition_row(s, a));
        }
    }
    let reward = m
        .states()
        .flat_map(|s| m.actions().map(move |a| m.reward(s, a)))
        .collect();
    Pomdp::from_parts(PomdpParts {
        discount: m.discount(),
        state_names: m.states().map(|s| m.state_name(s).to_string()).collect(),
        action_names: m.actions().map(|a| m.action_name(a).to_string()).collect(),
        obs_names: m.states().map(|s| m.state_name(s).to_string()).collect(),
        transition,
        observation,
        reward,
        initial_belief: m.initial_belief().as_slice().to_vec(),
    })
    .expect("identity-observation rebuild cannot change shape")
}

/// Seven-state gamble used as the exact-arithmetic fixture.
///
/// From the start the system drifts into either a decision state `t` or a
/// dead branch `u -> y` (a -50-per-step loop). At `t`, action `a` locks in a
/// modest +10 loop while action `b` gambles between a +10000 jackpot loop
/// and a -100 penalty loop. Observations are identity, the discount is 1/2,
/// and every quantity of interest is a dyadic rational, so exact expected
/// payoffs and risks can be worked out by hand.
pub fn gen_example1() -> Pomdp {
    let names = ["s", "t", "u", "v", "w", "x", "y"];
    let (ns, na) = (names.len(), 2);
    let idx = |n: &str| names.iter().position(|&m| m == n).unwrap();
    let mut transition = vec![0.0; ns * na * ns];
    let mut set = |s: usize, a: usize, to: &[(usize, f64)]| {
        for &(sj, p) in to {
            transition[(s * na + a) * ns + sj] = p;
        }
    };
    for a in 0..na {
        set(idx("s"), a, &[(idx("t"), 0.5), (idx("u"), 0.5)]);
        set(idx("u"), a, &[(idx("y"), 1.0)]);
        for loop_state in ["v", "w", "x", "y"] {
            set(idx(loop_state), a, &[(idx(loop_state), 1.0)]);
        }
    }
    set(idx("t"), 0, &[(idx("v"), 1.0)]);
    set(idx("t"), 1, &[(idx("w"), 0.5), (idx("x"), 0.5)]);
    let mut observation = vec![0.0; ns * ns];
    for s in 0..ns {
        observation[s * ns + s] = 1.0;
    }
    let mut reward = vec![0.0; ns * na];
    for (state, r) in [("v", 10.0), ("w", 10_000.0), ("x", -100.0), ("y", -50.0)] {
        for a in 0..na {
            reward[idx(state) * na + a] = r;
        }
    }
    let mut initial_belief = vec![0.0; ns];
    initial_belief[idx("s")] = 1.0;
    Pomdp::from_parts(PomdpParts {
        discount: 0.5,
        state_names: names.iter().map(|s| s.to_string()).collect(),
        action_names: vec!["a".into(), "b".into()],
        obs_names: names.iter().map(|s| s.to_string()).collect(),
        transition,
        observation,
        reward,
        initial_belief,
    })
    .expect("fixture shape is fixed")
}

/// Tiger with delayed, observable payouts.
///
/// Opening a door moves the system into a signal state (`ate-*` after the
/// tiger door, `gold-*` after the treasure door) whose side component is the
/// freshly shuffled tiger position. Signal states announce themselves with a
/// deterministic observation and pay the door outcome (-100 / +10) on the
/// next step, whatever that step's action is; apart from that they behave
/// like the matching `tiger-*` state. Listening costs 1 and hears the tiger
/// correctly with probability 0.85.
pub fn gen_tiger() -> Pomdp {
    const SIDES: usize = 2; // 0 = left, 1 = right
    const SIGNALS: usize = 3; // 0 = none, 1 = ate, 2 = gold
    let state = |side: usize, sig: usize| sig * SIDES + side;
    let state_names: Vec<String> = ["tiger", "ate", "gold"]
        .iter()
        .flat_map(|kind| ["left", "right"].map(|side| format!("{kind}-{side}")))
        .collect();
    let action_names = ["listen", "open-left", "open-right"];
    let obs_names = ["hear-left", "hear-right", "ate", "treasure"];
    let (ns, na, nz) = (SIDES * SIGNALS, action_names.len(), obs_names.len());

    let mut transition = vec![0.0; ns * na * ns];
    for side in 0..SIDES {
        for sig in 0..SIGNALS {
            let s = state(side, sig);
            // Listening leaves the tiger in place and clears any signal.
            transition[(s * na) * ns + state(side, 0)] = 1.0;
            for (open, door) in [(1, 0), (2, 1)] {
                // Tiger door -> ate, treasure door -> gold; side reshuffles.
                let outcome = if side == door { 1 } else { 2 };
                for new_side in 0..SIDES {
                    transition[(s * na + open) * ns + state(new_side, outcome)] = 0.5;
                }
            }
        }
    }

    let mut observation = vec![0.0; ns * nz];
    for side in 0..SIDES {
        observation[state(side, 0) * nz + side] = 0.85;
        observation[state(side, 0) * nz + (1 - side)] = 0.15;
        observation[state(side, 1) * nz + 2] = 1.0;
        observation[state(side, 2) * nz + 3] = 1.0;
    }

    let mut reward = vec![0.0; ns * na];
    for side in 0..SIDES {
        reward[state(side, 0) * na] = -1.0; // listening in a quiet state
        for a in 0..na {
            reward[state(side, 1) * na + a] = -100.0;
            reward[state(side, 2) * na + a] = 10.0;
        }
    }

    let mut initial_belief = vec![0.0; ns];
    initial_belief[state(0, 0)] = 0.5;
    initial_belief[state(1, 0)] = 0.5;
    Pomdp::from_parts(PomdpParts {
        discount: 0.95,
        state_names,
        action_names: action_names.iter().map(|s| s.to_string()).collect(),
        obs_names: obs_names.iter().map(|s| s.to_string()).collect(),
        transition,
        observation,
        reward,
        initial_belief,
    })
    .expect("fixture shape is fixed")
}

/// One try-your-luck task on an open 3x3 grid: reward +10 or penalty -10
/// with even odds, discount 0.9. The agent starts in the corner opposite the
/// task cell with a known position but unknown heading.
pub fn hallway_3x3() -> Pomdp {
    gen_hallway(&HallwaySpec {
        rows: vec!["S.1".into(), "...".into(), "...".into()],
        tasks: vec![TaskType {
            reward: 10.0,
            penalty: -10.0,
            p_good: 0.5,
        }],
        discount: 0.9,
        step_cost: 0.0,
    })
    .expect("built-in map is well formed")
}

/// Outcome distribution of one task type on a hallway map.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TaskType {
    pub reward: f64,
    pub penalty: f64,
    pub p_good: f64,
}

/// A grid-world navigation benchmark.
///
/// Map characters: `#` wall, `.` free, `S` start, `T` trap (free, but
/// entering it points the agent in a uniformly random direction), digits
/// `1`-`9` a task cell of that type (1-indexed into `tasks`). Entering a
/// task cell for the first time resolves it: with the type's `p_good` the
/// agent lands in a "good" signal state paying `reward` on the next step,
/// otherwise a "bad" one paying `penalty`; either way the task is spent.
/// The agent observes which of its four sides (front, right, back, left)
/// are walls, plus any signal it is standing on. `step_cost` is added to
/// every reward.
#[derive(Clone, Debug, PartialEq)]
pub struct HallwaySpec {
    pub rows: Vec<String>,
    pub tasks: Vec<TaskType>,
    pub discount: f64,
    pub step_cost: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("map rows have different lengths")]
    Ragged,
    #[error("bad map character '{ch}' at row {row}, column {col}")]
    BadChar { row: usize, col: usize, ch: char },
    #[error("map has no start cell 'S'")]
    NoStart,
    #[error("map has more than one start cell")]
    MultipleStarts,
    #[error("task digit {digit} at row {row}, column {col} has no task type")]
    UnknownTask {
        row: usize,
        col: usize,
        digit: usize,
    },
    #[error("model too large: {0}")]
    TooLarge(#[from] crate::model::ModelError),
}

// Headings 0..4 = N, E, S, W; forward displacement per heading.
const HEADING_NAMES: [&str; 4] = ["N", "E", "S", "W"];
const DELTAS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

pub fn gen_hallway(spec: &HallwaySpec) -> Result<Pomdp, MapError> {
    let grid: Vec<&[u8]> = spec.rows.iter().map(|r| r.as_bytes()).collect();
    if grid.is_empty() || grid[0].is_empty() {
        return Err(MapError::Empty);
    }
    let (rows, cols) = (grid.len(), grid[0].len());
    if grid.iter().any(|r| r.len() != cols) {
        return Err(MapError::Ragged);
    }

    // Free cells get dense indices; walls are only looked up by coordinate.
    let mut cell_index = vec![usize::MAX; rows * cols];
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    let mut traps = Vec::new();
    let mut task_cells: Vec<(usize, usize)> = Vec::new(); // (cell, task type)
    for (r, row) in grid.iter().enumerate() {
        for (c, &ch) in row.iter().enumerate() {
            if ch == b'#' {
                continue;
            }
            let cell = cells.len();
            cell_index[r * cols + c] = cell;
            cells.push((r, c));
            match ch {
                b'.' => {}
                b'S' => {
                    if start.replace(cell).is_some() {
                        return Err(MapError::MultipleStarts);
                    }
                }
                b'T' => traps.push(cell),
                b'1'..=b'9' => {
                    let digit = (ch - b'0') as usize;
                    if digit > spec.tasks.len() {
                        return Err(MapError::UnknownTask {
                            row: r,
                            col: c,
                            digit,
                        });
                    }
                    task_cells.push((cell, digit - 1));
                }
                _ => {
                    return Err(MapError::BadChar {
                        row: r,
                        col: c,
                        ch: ch as char,
                    })
                }
            }
        }
    }
    let start = start.ok_or(MapError::NoStart)?;
    let is_trap = |cell: usize| traps.contains(&cell);
    let task_at = |cell: usize| {
        task_cells
            .iter()
            .position(|&(tc, _)| tc == cell)
            .map(|i| (i, task_cells[i].1))
    };
    let is_wall = |r: isize, c: isize| {
        r < 0
            || c < 0
            || r as usize >= rows
            || c as usize >= cols
            || grid[r as usize][c as usize] == b'#'
    };

    let n_masks = 1usize << task_cells.len();
    // Signal 0 is "none"; type k contributes signals 1+2k (good) and 2+2k (bad).
    let n_signals = 1 + 2 * spec.tasks.len();
    let n_cells = cells.len();
    let ns = n_cells * 4 * n_masks * n_signals;
    let state = |cell: usize, h: usize, mask: usize, sig: usize| {
        ((cell * 4 + h) * n_masks + mask) * n_signals + sig
    };

    let signal_name = |sig: usize| {
        if sig == 0 {
            "none".to_string()
        } else {
            let k = (sig - 1) / 2;
            let kind = if (sig - 1).is_multiple_of(2) {
                "good"
            } else {
                "bad"
            };
            format!("{kind}{}", k + 1)
        }
    };
    let mut state_names = Vec::with_capacity(ns);
    for &(r, c) in &cells {
        for heading in HEADING_NAMES {
            for mask in 0..n_masks {
                for sig in 0..n_signals {
                    state_names.push(format!("r{r}c{c}-{heading}-m{mask}-{}", signal_name(sig)));
                }
            }
        }
    }

    let wallmask = |cell: usize, h: usize| {
        let (r, c) = cells[cell];
        let mut mask = 0usize;
        for side in 0..4 {
            let (dr, dc) = DELTAS[(h + side) % 4];
            if is_wall(r as isize + dr, c as isize + dc) {
                mask |= 1 << side;
            }
        }
        mask
    };
    let nz = 16 * n_signals;
    let obs_of = |cell: usize, h: usize, sig: usize| wallmask(cell, h) * n_signals + sig;
    let obs_names: Vec<String> = (0..nz)
        .map(|o| format!("w{:04b}-{}", o / n_signals, signal_name(o % n_signals)))
        .collect();

    let actions = ["forward", "turn-left", "turn-right"];
    let na = actions.len();
    let mut transition = vec![0.0; ns * na * ns];
    let mut observation = vec![0.0; ns * nz];
    let mut reward = vec![0.0; ns * na];
    for cell in 0..n_cells {
        let (r, c) = cells[cell];
        for h in 0..4 {
            for mask in 0..n_masks {
                for sig in 0..n_signals {
                    let s = state(cell, h, mask, sig);
                    observation[s * nz + obs_of(cell, h, sig)] = 1.0;
                    let pay = if sig == 0 {
                        0.0
                    } else {
                        let t = &spec.tasks[(sig - 1) / 2];
                        if (sig - 1) % 2 == 0 {
                            t.reward
                        } else {
                            t.penalty
                        }
                    };
                    for a in 0..na {
                        reward[s * na + a] = spec.step_cost + pay;
                    }

                    // Turns are deterministic and clear the signal.
                    let left = state(cell, (h + 3) % 4, mask, 0);
                    let right = state(cell, (h + 1) % 4, mask, 0);
                    transition[(s * na + 1) * ns + left] = 1.0;
                    transition[(s * na + 2) * ns + right] = 1.0;

                    // Forward: bump into walls, resolve tasks, spin on traps.
                    let (dr, dc) = DELTAS[h];
                    let (tr, tc) = (r as isize + dr, c as isize + dc);
                    let row = &mut transition[(s * na) * ns..(s * na + 1) * ns];
                    if is_wall(tr, tc) {
                        row[state(cell, h, mask, 0)] = 1.0;
                        continue;
                    }
                    let target = cell_index[tr as usize * cols + tc as usize];
                    let headings: &[(usize, f64)] = if is_trap(target) {
                        &[(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)]
                    } else {
                        &[(h, 1.0)]
                    };
                    let outcomes: Vec<(usize, usize, f64)> = match task_at(target) {
                        Some((bit, k)) if mask & (1 << bit) != 0 => {
                            let p = spec.tasks[k].p_good;
                            let cleared = mask & !(1 << bit);
                            vec![(cleared, 1 + 2 * k, p), (cleared, 2 + 2 * k, 1.0 - p)]
                        }
                        _ => vec![(mask, 0, 1.0)],
                    };
                    for &(nh, hp) in headings {
                        for &(nm, nsig, op) in &outcomes {
                            if hp * op > 0.0 {
                                row[state(target, nh, nm, nsig)] += hp * op;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut initial_belief = vec![0.0; ns];
    for h in 0..4 {
        initial_belief[state(start, h, n_masks - 1, 0)] = 0.25;
    }
    Ok(Pomdp::from_parts(PomdpParts {
        discount: spec.discount,
        state_names,
        action_names: actions.iter().map(|s| s.to_string()).collect(),
        obs_names,
        transition,
        observation,
        reward,
        initial_belief,
    })?)
}

/// Shape of a randomly generated model; see [`gen_random`].
#[derive(Clone, Debug, PartialEq)]
pub struct RandomModelSpec {
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    /// Positive successors per transition row.
    pub transition_branching: usize,
    /// Positive entries per observation row.
    pub obs_branching: usize,
    /// Lower bound on every positive probability, so that no outcome is too
    /// rare to show up in a sampling run of reasonable length.
    pub min_prob: f64,
    pub discount: f64,
    pub reward_range: (f64, f64),
    /// The initial belief is uniform over this many states.
    pub start_support: usize,
    pub seed: u64,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        RandomModelSpec {
            states: 4,
            actions: 2,
            observations: 3,
            transition_branching: 2,
            obs_branching: 2,
            min_prob: 0.3,
            discount: 0.9,
            reward_range: (-1.0, 1.0),
            start_support: 2,
            seed: 0,
        }
    }
}

/// Generates a random model, deterministically in `spec.seed`.
///
/// Rewards depend on the action only, which keeps them observable no matter
/// how the belief evolves.
pub fn gen_random(spec: &RandomModelSpec) -> Pomdp {
    let mut rng = RandomSource::new(spec.seed).stream(&[0x6d6f646c]);
    let action_rewards: Vec<f64> = (0..spec.actions)
        .map(|_| {
            let (lo, hi) = spec.reward_range;
            lo + (hi - lo) * rng.next_f64()
        })
        .collect();
    let mut reward = Vec::with_capacity(spec.states * spec.actions);
    for _ in 0..spec.states {
        reward.extend_from_slice(&action_rewards);
    }

    let row = |n: usize, branching: usize, rng: &mut crate::sampler::Stream| {
        let b = branching.min(n).max(1);
        let min_prob = spec.min_prob.min(1.0 / b as f64);
        // Partial Fisher-Yates picks b distinct targets.
        let mut targets: Vec<usize> = (0..n).collect();
        for i in 0..b {
            let j = i + (rng.next_u64() as usize) % (n - i);
            targets.swap(i, j);
        }
        let weights: Vec<f64> = (0..b).map(|_| rng.next_f64()).collect();
        let total: f64 = weights.iter().sum();
        let spare = 1.0 - b as f64 * min_prob;
        let mut out = vec![0.0; n];
        for (i, w) in weights.iter().enumerate() {
            let share = if total > 0.0 {
                w / total
            } else {
                1.0 / b as f64
            };
            out[targets[i]] = min_prob + spare * share;
        }
        out
    };

    let mut transition = Vec::with_capacity(spec.states * spec.actions * spec.states);
    for _ in 0..spec.states * spec.actions {
        transition.extend(row(spec.states, spec.transition_branching, &mut rng));
    }
    let mut observation = Vec::with_capacity(spec.states * spec.observations);
    for _ in 0..spec.states {
        observation.extend(row(spec.observations, spec.obs_branching, &mut rng));
    }

    let support = spec.start_support.clamp(1, spec.states);
    let mut initial_belief = vec![0.0; spec.states];
    for p in initial_belief.iter_mut().take(support) {
        *p = 1.0 / support as f64;
    }
    Pomdp::from_parts(PomdpParts {
        discount: spec.discount,
        state_names: (0..spec.states).map(|i| format!("s{i}")).collect(),
        action_names: (0..spec.actions).map(|i| format!("a{i}")).collect(),
        obs_names: (0..spec.observations).map(|i| format!("o{i}")).collect(),
        transition,
        observation,
        reward,
        initial_belief,
    })
    .expect("random spec dimensions are consistent")
}

/// Generates a random model with genuinely state-dependent risk,
/// deterministically in `seed`.
///
/// Observations reveal the state's group (`state % observations`) exactly,
/// rewards depend on `(group, action)`, and the run starts from a known
/// state, so rewards stay observable along any belief. Every transition row
/// has full support with probabilities at least `min_prob`, so every
/// observation keeps probability at least `min_prob` from every reachable
/// belief — no history is too rare for a sampling run to find.
pub fn gen_random_risky(spec: &RandomModelSpec) -> Pomdp {
    assert!(
        spec.states as f64 * spec.min_prob <= 1.0 + 1e-12,
        "full-support rows need states * min_prob <= 1"
    );
    let mut rng = RandomSource::new(spec.seed).stream(&[0x7269736b]);
    let groups = spec.observations.min(spec.states);
    let (lo, hi) = spec.reward_range;
    let group_rewards: Vec<f64> = (0..groups * spec.actions)
        .map(|_| lo + (hi - lo) * rng.next_f64())
        .collect();
    let mut reward = Vec::with_capacity(spec.states * spec.actions);
    for s in 0..spec.states {
        let g = s % groups;
        reward.extend_from_slice(&group_rewards[g * spec.actions..(g + 1) * spec.actions]);
    }

    let mut transition = Vec::with_capacity(spec.states * spec.actions * spec.states);
    for _ in 0..spec.states * spec.actions {
        let weights: Vec<f64> = (0..spec.states).map(|_| rng.next_f64()).collect();
        let total: f64 = weights.iter().sum();
        let spare = 1.0 - spec.states as f64 * spec.min_prob;
        transition.extend(weights.iter().map(|w| spec.min_prob + spare * (w / total)));
    }
    let mut observation = vec![0.0; spec.states * spec.observations];
    for s in 0..spec.states {
        observation[s * spec.observations + s % groups] = 1.0;
    }
    let mut initial_belief = vec![0.0; spec.states];
    initial_belief[0] = 1.0;
    Pomdp::from_parts(PomdpParts {
        discount: spec.discount,
        state_names: (0..spec.states).map(|i| format!("s{i}")).collect(),
        action_names: (0..spec.actions).map(|i| format!("a{i}")).collect(),
        obs_names: (0..spec.observations).map(|i| format!("o{i}")).collect(),
        transition,
        observation,
        reward,
        initial_belief,
    })
    .expect("risky spec dimensions are consistent")
}
