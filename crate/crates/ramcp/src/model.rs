//! POMDP model types, validation, belief arithmetic, and horizon reduction.
//!
//! A model is a finite POMDP `(S, A, Z, delta, O, r, lambda, gamma)` with
//! state-dependent observations (`O: S -> D(Z)` applies to the successor
//! state) and rewards `r: S x A -> R` paid on leaving a state. Rewards must be
//! observable: two states with identical observation rows, or both in the
//! support of the initial belief, must agree on rewards for every action.
//! That property makes the reward of a history well-defined, which the risk
//! bookkeeping elsewhere in this crate relies on.
//!
//! Payoff convention used throughout the crate: the discounted payoff at
//! horizon index `N` is `sum_{i=0}^{N} gamma^i * r_i`, i.e. it has `N + 1`
//! reward terms, so a full play at horizon `N` runs `N + 1` decision steps.

mod format;

pub use format::{parse_model, write_model, ParseError};

use thiserror::Error;

/// Index of a hidden state.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct StateId(pub u16);

/// Index of an action.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct ActionId(pub u16);

/// Index of an observation.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct ObsId(pub u16);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ObsId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Probability distribution over hidden states.
#[derive(Clone, PartialEq, Debug)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Self {
        Belief { probs }
    }

    /// Point mass on a single state.
    pub fn point(state: StateId, num_states: usize) -> Self {
        let mut probs = vec![0.0; num_states];
        probs[state.index()] = 1.0;
        Belief { probs }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.probs[s.index()]
    }

    /// States with strictly positive probability.
    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| StateId(i as u16))
    }
}

/// Action-observation history, addressed from some root belief.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct History {
    steps: Vec<(ActionId, ObsId)>,
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    pub fn push(&mut self, a: ActionId, o: ObsId) {
        self.steps.push((a, o));
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[(ActionId, ObsId)] {
        &self.steps
    }
}

impl FromIterator<(ActionId, ObsId)> for History {
    fn from_iter<T: IntoIterator<Item = (ActionId, ObsId)>>(iter: T) -> Self {
        History {
            steps: iter.into_iter().collect(),
        }
    }
}

/// How the planning horizon is specified.
///
/// `Steps(n)` plans at horizon index `n` directly. `Epsilon(eps)` asks for the
/// finite horizon that approximates the infinite-horizon payoff to within
/// `eps / 2`; the payoff threshold is then lowered by `eps / 2` so that a plan
/// safe at the reduced finite horizon is `eps`-safe for the infinite horizon.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum HorizonSpec {
    Steps(u32),
    Epsilon(f64),
}

impl HorizonSpec {
    /// Resolves to `(decision_steps, effective_tau)`.
    ///
    /// `decision_steps` is `N + 1` where `N` is the horizon index: a play of
    /// `N + 1` actions yields the payoff terms `i = 0..=N`.
    pub fn resolve(self, model: &Pomdp, tau: f64) -> (usize, f64) {
        match self {
            HorizonSpec::Steps(n) => (n as usize + 1, tau),
            HorizonSpec::Epsilon(eps) => {
                let n = horizon_for_epsilon(model, eps);
                (n + 1, tau - eps / 2.0)
            }
        }
    }
}

/// Finite POMDP with dense tables.
///
/// Tables are stored flat: `transition[s][a]` is a row over successor states,
/// `observation[s]` is a row over observations (emitted by the successor
/// state), `reward[s][a]` is a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Pomdp {
    discount: f64,
    state_names: Vec<String>,
    action_names: Vec<String>,
    obs_names: Vec<String>,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    initial_belief: Belief,
    /// `transition[s][a]` rows with a single positive entry, by successor
    /// index; `u32::MAX` otherwise. Lets samplers skip the draw (and the
    /// row scan) on deterministic rows without changing any distribution.
    transition_det: Vec<u32>,
    /// The same for each state's observation row.
    observation_det: Vec<u32>,
}

/// Everything needed to assemble a [`Pomdp`]; used by generators and the parser.
#[derive(Debug, Clone)]
pub struct PomdpParts {
    pub discount: f64,
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub obs_names: Vec<String>,
    /// `transition[s * A * S + a * S + s2]`
    pub transition: Vec<f64>,
    /// `observation[s * Z + o]`
    pub observation: Vec<f64>,
    /// `reward[s * A + a]`
    pub reward: Vec<f64>,
    pub initial_belief: Vec<f64>,
}

impl Pomdp {
    pub fn from_parts(parts: PomdpParts) -> Result<Self, ModelError> {
        let s = parts.state_names.len();
        let a = parts.action_names.len();
        let z = parts.obs_names.len();
        if s == 0 || a == 0 || z == 0 {
            return Err(ModelError::EmptyModel);
        }
        if s > u16::MAX as usize || a > u16::MAX as usize || z > u16::MAX as usize {
            return Err(ModelError::TooLarge);
        }
        if parts.transition.len() != s * a * s
            || parts.observation.len() != s * z
            || parts.reward.len() != s * a
            || parts.initial_belief.len() != s
        {
            return Err(ModelError::ShapeMismatch);
        }
        let det_of = |row: &[f64]| {
            let mut found = u32::MAX;
            for (i, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    if found != u32::MAX {
                        return u32::MAX;
                    }
                    found = i as u32;
                }
            }
            found
        };
        let transition_det = parts.transition.chunks_exact(s).map(det_of).collect();
        let observation_det = parts.observation.chunks_exact(z).map(det_of).collect();
        Ok(Pomdp {
            discount: parts.discount,
            state_names: parts.state_names,
            action_names: parts.action_names,
            obs_names: parts.obs_names,
            transition: parts.transition,
            observation: parts.observation,
            reward: parts.reward,
            initial_belief: Belief::new(parts.initial_belief),
            transition_det,
            observation_det,
        })
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_observations(&self) -> usize {
        self.obs_names.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.state_names.len() as u16).map(StateId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.action_names.len() as u16).map(ActionId)
    }

    pub fn observations(&self) -> impl Iterator<Item = ObsId> {
        (0..self.obs_names.len() as u16).map(ObsId)
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s.index()]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a.index()]
    }

    pub fn obs_name(&self, o: ObsId) -> &str {
        &self.obs_names[o.index()]
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    /// Distribution over successor states for `(s, a)`.
    pub fn transition_row(&self, s: StateId, a: ActionId) -> &[f64] {
        let n = self.num_states();
        let base = (s.index() * self.num_actions() + a.index()) * n;
        &self.transition[base..base + n]
    }

    /// Distribution over observations emitted by state `s`.
    pub fn observation_row(&self, s: StateId) -> &[f64] {
        let z = self.num_observations();
        let base = s.index() * z;
        &self.observation[base..base + z]
    }

    /// The single successor of `(s, a)` if the transition is deterministic.
    #[inline]
    pub(crate) fn transition_det(&self, s: StateId, a: ActionId) -> Option<StateId> {
        let det = self.transition_det[s.index() * self.num_actions() + a.index()];
        (det != u32::MAX).then_some(StateId(det as u16))
    }

    /// The single observation of `s` if its observation row is deterministic.
    #[inline]
    pub(crate) fn observation_det(&self, s: StateId) -> Option<ObsId> {
        let det = self.observation_det[s.index()];
        (det != u32::MAX).then_some(ObsId(det as u16))
    }

    pub fn reward(&self, s: StateId, a: ActionId) -> f64 {
        self.reward[s.index() * self.num_actions() + a.index()]
    }

    /// Smallest and largest entries of the reward table.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in &self.reward {
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }

    /// Checks that all probability rows are stochastic, the discount lies in
    /// (0, 1), and rewards are observable. Returns every violation found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(Violation::DiscountOutOfRange {
                discount: self.discount,
            });
        }
        for s in self.states() {
            for a in self.actions() {
                self.check_row(
                    self.transition_row(s, a),
                    RowKind::Transition {
                        state: self.state_name(s).to_string(),
                        action: self.action_name(a).to_string(),
                    },
                    &mut out,
                );
            }
            self.check_row(
                self.observation_row(s),
                RowKind::Observation {
                    state: self.state_name(s).to_string(),
                },
                &mut out,
            );
        }
        self.check_row(
            self.initial_belief.as_slice(),
            RowKind::InitialBelief,
            &mut out,
        );

        // Observable rewards: states indistinguishable by observation row, or
        // jointly possible at the start, must pay identically.
        for s1 in self.states() {
            for s2 in self.states() {
                if s2.0 <= s1.0 {
                    continue;
                }
                let same_obs = self
                    .observation_row(s1)
                    .iter()
                    .zip(self.observation_row(s2))
                    .all(|(p, q)| (p - q).abs() <= 1e-9);
                let both_initial =
                    self.initial_belief.prob(s1) > 0.0 && self.initial_belief.prob(s2) > 0.0;
                if !(same_obs || both_initial) {
                    continue;
                }
                for a in self.actions() {
                    let (r1, r2) = (self.reward(s1, a), self.reward(s2, a));
                    if (r1 - r2).abs() > 1e-9 {
                        out.push(Violation::RewardNotObservable {
                            state_a: self.state_name(s1).to_string(),
                            state_b: self.state_name(s2).to_string(),
                            action: self.action_name(a).to_string(),
                            reward_a: r1,
                            reward_b: r2,
                            reason: if same_obs {
                                "identical observation rows"
                            } else {
                                "both in the initial belief support"
                            },
                        });
                    }
                }
            }
        }
        out
    }

    fn check_row(&self, row: &[f64], kind: RowKind, out: &mut Vec<Violation>) {
        let mut sum = 0.0;
        for &p in row {
            if p < 0.0 {
                out.push(Violation::NegativeProbability {
                    row: kind.clone(),
                    value: p,
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            out.push(Violation::NotStochastic {
                row: kind.clone(),
                sum,
            });
        }
    }
}

/// Location of a probability row inside a model, for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub enum RowKind {
    Transition { state: String, action: String },
    Observation { state: String },
    InitialBelief,
}

impl std::fmt::Display for RowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowKind::Transition { state, action } => {
                write!(f, "transition row ({state}, {action})")
            }
            RowKind::Observation { state } => write!(f, "observation row ({state})"),
            RowKind::InitialBelief => write!(f, "initial belief"),
        }
    }
}

/// A single model validation failure.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("discount {discount} is outside (0, 1)")]
    DiscountOutOfRange { discount: f64 },
    #[error("{row} sums to {sum}, expected 1")]
    NotStochastic { row: RowKind, sum: f64 },
    #[error("{row} contains negative probability {value}")]
    NegativeProbability { row: RowKind, value: f64 },
    #[error(
        "states {state_a} and {state_b} have {reason} but reward({state_a}, {action}) = \
         {reward_a} differs from reward({state_b}, {action}) = {reward_b}"
    )]
    RewardNotObservable {
        state_a: String,
        state_b: String,
        action: String,
        reward_a: f64,
        reward_b: f64,
        reason: &'static str,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model has no states, actions, or observations")]
    EmptyModel,
    #[error("model dimension exceeds u16 indexing")]
    TooLarge,
    #[error("table shapes do not match the declared dimensions")]
    ShapeMismatch,
    #[error("observation {obs} has zero probability after action {action}")]
    ZeroProbabilityObservation { action: u16, obs: u16 },
    #[error("payoff at horizon index {horizon} needs {needed} rewards, got {got}")]
    InsufficientRewards {
        horizon: usize,
        needed: usize,
        got: usize,
    },
}

/// Probability of observing `o` after playing `a` from belief `b`:
/// `sum_{s, s'} b(s) * delta(s'|s, a) * O(o|s')`.
pub fn obs_probability(model: &Pomdp, b: &Belief, a: ActionId, o: ObsId) -> f64 {
    let mut total = 0.0;
    for (si, &bs) in b.as_slice().iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        let row = model.transition_row(StateId(si as u16), a);
        let mut inner = 0.0;
        for (sj, &p) in row.iter().enumerate() {
            if p > 0.0 {
                inner += p * model.observation_row(StateId(sj as u16))[o.index()];
            }
        }
        total += bs * inner;
    }
    total
}

/// Exact Bayes update of `b` after playing `a` and observing `o`.
///
/// Errors when the observation has probability below 1e-12 under `(b, a)`.
pub fn belief_update(
    model: &Pomdp,
    b: &Belief,
    a: ActionId,
    o: ObsId,
) -> Result<Belief, ModelError> {
    belief_update_full(model, b, a, o).map(|(b, _)| b)
}

/// Bayes update returning both the posterior and the observation probability.
pub fn belief_update_full(
    model: &Pomdp,
    b: &Belief,
    a: ActionId,
    o: ObsId,
) -> Result<(Belief, f64), ModelError> {
    let n = model.num_states();
    let mut post = vec![0.0; n];
    for (si, &bs) in b.as_slice().iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        let row = model.transition_row(StateId(si as u16), a);
        for (sj, &p) in row.iter().enumerate() {
            if p > 0.0 {
                post[sj] += bs * p;
            }
        }
    }
    let mut norm = 0.0;
    for (sj, q) in post.iter_mut().enumerate() {
        *q *= model.observation_row(StateId(sj as u16))[o.index()];
        norm += *q;
    }
    if norm <= 1e-12 {
        return Err(ModelError::ZeroProbabilityObservation {
            action: a.0,
            obs: o.0,
        });
    }
    for q in &mut post {
        *q /= norm;
    }
    Ok((Belief::new(post), norm))
}

/// Discounted payoff `sum_{i=0}^{horizon} gamma^i * rewards[i]`.
///
/// The sum is inclusive of index `horizon`, so `horizon + 1` rewards are
/// consumed.
pub fn discounted_payoff(rewards: &[f64], gamma: f64, horizon: usize) -> Result<f64, ModelError> {
    let needed = horizon + 1;
    if rewards.len() < needed {
        return Err(ModelError::InsufficientRewards {
            horizon,
            needed,
            got: rewards.len(),
        });
    }
    let mut disc = 1.0;
    let mut total = 0.0;
    for &r in &rewards[..needed] {
        total += disc * r;
        disc *= gamma;
    }
    Ok(total)
}

/// Smallest horizon index `N` such that
/// `gamma^N * |max(0, r_max) - min(0, r_min)| <= (1 - gamma) * eps / 2`.
///
/// Truncating the infinite-horizon payoff after the terms `i = 0..=N` then
/// changes it by at most `eps / 2`. Computed by repeated multiplication so the
/// returned `N` satisfies the inequality exactly as evaluated in f64 and
/// `N - 1` does not (unless `N = 0`).
pub fn horizon_for_epsilon(model: &Pomdp, eps: f64) -> usize {
    let (r_min, r_max) = model.reward_bounds();
    let spread = (r_max.max(0.0) - r_min.min(0.0)).abs();
    let bound = (1.0 - model.discount()) * eps / 2.0;
    let gamma = model.discount();
    let mut n = 0usize;
    let mut factor = 1.0f64;
    while factor * spread > bound {
        factor *= gamma;
        n += 1;
    }
    n
}

/// Threshold seen from one step deeper: a continuation achieving
/// `(tau - r) / gamma` after a first reward `r` achieves `tau` overall.
pub fn shift_threshold(tau: f64, r: f64, gamma: f64) -> f64 {
    (tau - r) / gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;

    #[test]
    fn tiger_validates_clean() {
        let m = bench::gen_tiger();
        assert_eq!(m.validate(), Vec::new());
    }

    #[test]
    fn broken_transition_row_reported() {
        let mut parts = tiny_parts();
        parts.transition[0] = 0.7; // row (s0, a0) now sums to 1.2
        let m = Pomdp::from_parts(parts).unwrap();
        let violations = m.validate();
        assert!(violations.iter().any(|v| matches!(
            v,
            Violation::NotStochastic {
                row: RowKind::Transition { .. },
                ..
            }
        )));
    }

    #[test]
    fn unobservable_reward_reported() {
        // Two states with identical observation rows but different rewards.
        let mut parts = tiny_parts();
        parts.reward[0] = 1.0;
        parts.reward[2] = 2.0;
        let m = Pomdp::from_parts(parts).unwrap();
        let violations = m.validate();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::RewardNotObservable { .. })));
    }

    /// Two states, two actions, one observation; uniform everything.
    fn tiny_parts() -> PomdpParts {
        PomdpParts {
            discount: 0.5,
            state_names: vec!["s0".into(), "s1".into()],
            action_names: vec!["a0".into(), "a1".into()],
            obs_names: vec!["o0".into()],
            transition: vec![0.5; 2 * 2 * 2],
            observation: vec![1.0; 2],
            reward: vec![0.0; 4],
            initial_belief: vec![0.5, 0.5],
        }
    }

    #[test]
    fn tiger_listen_belief_update() {
        let m = bench::gen_tiger();
        let listen = bench::action_named(&m, "listen");
        let hear_left = bench::obs_named(&m, "hear-left");
        let (post, norm) = belief_update_full(&m, m.initial_belief(), listen, hear_left).unwrap();
        // 0.5 * 0.85 / (0.5 * 0.85 + 0.5 * 0.15) = 0.85
        let left = bench::state_named(&m, "tiger-left");
        assert!((post.prob(left) - 0.85).abs() < 1e-12);
        assert!((norm - 0.5).abs() < 1e-12);
    }

    #[test]
    fn belief_update_deterministic_transition_is_point_mass() {
        let m = bench::gen_example1();
        let b = m.initial_belief().clone();
        let a = ActionId(0);
        // From s both actions branch to t or u; observing t pins the state.
        let obs_t = ObsId(1);
        let post = belief_update(&m, &b, a, obs_t).unwrap();
        assert_eq!(post.prob(StateId(1)), 1.0);
        assert_eq!(post.support().count(), 1);
    }

    #[test]
    fn belief_update_zero_probability_errors() {
        let m = bench::gen_example1();
        let b = m.initial_belief().clone();
        // Observing the loop state x right away is impossible from s.
        let err = belief_update(&m, &b, ActionId(0), ObsId(5)).unwrap_err();
        assert!(matches!(err, ModelError::ZeroProbabilityObservation { .. }));
    }

    #[test]
    fn obs_probabilities_sum_to_one() {
        let m = bench::gen_tiger();
        for a in m.actions() {
            let total: f64 = m
                .observations()
                .map(|o| obs_probability(&m, m.initial_belief(), a, o))
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "action {a:?} sums to {total}");
        }
    }

    #[test]
    fn discounted_payoff_small_cases() {
        assert_eq!(discounted_payoff(&[1.0, 1.0, 1.0], 0.5, 2).unwrap(), 1.75);
        assert_eq!(discounted_payoff(&[0.0, 0.0], 0.9, 1).unwrap(), 0.0);
        // gamma = 0 keeps only the first term.
        assert_eq!(discounted_payoff(&[3.0, 7.0], 0.0, 1).unwrap(), 3.0);
        let err = discounted_payoff(&[1.0, 2.0], 0.5, 2).unwrap_err();
        assert!(matches!(err, ModelError::InsufficientRewards { .. }));
    }

    #[test]
    fn horizon_for_epsilon_reference_case() {
        // gamma = 0.95, rewards spanning [-100, 10], eps = 1 -> N = 164.
        let parts = PomdpParts {
            discount: 0.95,
            state_names: vec!["s".into()],
            action_names: vec!["a".into(), "b".into()],
            obs_names: vec!["o".into()],
            transition: vec![1.0, 1.0],
            observation: vec![1.0],
            reward: vec![10.0, -100.0],
            initial_belief: vec![1.0],
        };
        let m = Pomdp::from_parts(parts).unwrap();
        let n = horizon_for_epsilon(&m, 1.0);
        assert_eq!(n, 164);
        // Minimality: N satisfies the bound, N - 1 does not.
        let bound = (1.0 - 0.95) * 1.0 / 2.0;
        assert!(0.95f64.powi(n as i32) * 110.0 <= bound);
        assert!(0.95f64.powi(n as i32 - 1) * 110.0 > bound);
    }

    #[test]
    fn horizon_for_epsilon_zero_spread() {
        let parts = PomdpParts {
            discount: 0.9,
            state_names: vec!["s".into()],
            action_names: vec!["a".into()],
            obs_names: vec!["o".into()],
            transition: vec![1.0],
            observation: vec![1.0],
            reward: vec![0.0],
            initial_belief: vec![1.0],
        };
        let m = Pomdp::from_parts(parts).unwrap();
        assert_eq!(horizon_for_epsilon(&m, 0.5), 0);
    }

    #[test]
    fn shift_threshold_examples() {
        assert_eq!(shift_threshold(1.0, 0.0, 0.5), 2.0);
        assert_eq!(shift_threshold(4.0, 10.0, 0.5), -12.0);
    }

    #[test]
    fn shift_threshold_composes_with_payoff() {
        // Safety of a play is invariant under shifting past its first reward:
        // payoff(r_0..r_n) >= tau  <=>  payoff(r_1..r_n) >= shift(tau, r_0).
        let gamma = 0.7;
        let rewards = [2.0, -1.0, 0.5, 3.0];
        let full = discounted_payoff(&rewards, gamma, 3).unwrap();
        let suffix = discounted_payoff(&rewards[1..], gamma, 2).unwrap();
        for tau in [-5.0, 0.0, 1.0, full, 10.0] {
            let shifted = shift_threshold(tau, rewards[0], gamma);
            assert_eq!(full >= tau, suffix >= shifted - 1e-12 * tau.abs().max(1.0));
        }
    }

    #[test]
    fn truncation_error_bounded_by_half_epsilon() {
        // For random reward sequences within the model's bounds, truncating at
        // the epsilon horizon changes the discounted payoff by at most eps/2.
        use crate::sampler::RandomSource;
        let parts = PomdpParts {
            discount: 0.9,
            state_names: vec!["s".into()],
            action_names: vec!["a".into(), "b".into()],
            obs_names: vec!["o".into()],
            transition: vec![1.0, 1.0],
            observation: vec![1.0],
            reward: vec![4.0, -3.0],
            initial_belief: vec![1.0],
        };
        let m = Pomdp::from_parts(parts).unwrap();
        let eps = 2.0;
        let n = horizon_for_epsilon(&m, eps);
        let mut rng = RandomSource::new(7).stream(&[0]);
        for _ in 0..1000 {
            let len = n + 1 + 200;
            let rewards: Vec<f64> = (0..len).map(|_| -3.0 + 7.0 * rng.next_f64()).collect();
            let long = discounted_payoff(&rewards, 0.9, len - 1).unwrap();
            let short = discounted_payoff(&rewards, 0.9, n).unwrap();
            assert!(
                (long - short).abs() <= eps / 2.0 + 1e-12,
                "truncation error {} exceeds {}",
                (long - short).abs(),
                eps / 2.0
            );
        }
    }
}
