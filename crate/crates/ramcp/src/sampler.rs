//! Deterministic random streams for simulation.
//!
//! Everything stochastic in this crate draws from a [`Stream`]. Streams are
//! addressed by a path of integers under a root seed (for example
//! `(seed, trial, step)`), so independent trials and planning steps get
//! statistically independent generators while the whole run stays
//! reproducible regardless of scheduling or thread count.

use crate::model::{ActionId, Belief, ObsId, Pomdp, StateId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Root of a family of reproducible random streams.
#[derive(Copy, Clone, Debug)]
pub struct RandomSource {
    seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Opens the stream addressed by `path`. Distinct paths give independent
    /// streams; the same path always gives the same stream.
    pub fn stream(&self, path: &[u64]) -> Stream {
        let mut state = mix(self.seed ^ 0x6a09_e667_f3bc_c909);
        for &p in path {
            state = mix(state.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix(p));
        }
        let mut key = [0u8; 32];
        let mut x = state;
        for chunk in key.chunks_exact_mut(8) {
            x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
            chunk.copy_from_slice(&mix(x).to_le_bytes());
        }
        Stream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }
}

/// splitmix64 finalizer.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A single pseudorandom generator with sampling helpers.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    /// Samples an index according to `probs` (need not be exactly normalized;
    /// leftover mass from rounding goes to the last positive entry).
    pub fn sample_index(&mut self, probs: &[f64]) -> usize {
        let u = self.next_f64();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }

    pub fn sample_state(&mut self, belief: &Belief) -> StateId {
        StateId(self.sample_index(belief.as_slice()) as u16)
    }

    /// One step of the generative model: from state `s` take action `a`,
    /// collecting the reward, the sampled successor, and an observation
    /// emitted by that successor.
    pub fn sample_step(&mut self, model: &Pomdp, s: StateId, a: ActionId) -> (StateId, ObsId, f64) {
        let r = model.reward(s, a);
        let next = match model.transition_det(s, a) {
            Some(next) => next,
            None => StateId(self.sample_index(model.transition_row(s, a)) as u16),
        };
        let obs = match model.observation_det(next) {
            Some(obs) => obs,
            None => ObsId(self.sample_index(model.observation_row(next)) as u16),
        };
        (next, obs, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;

    // Inverse chi-square CDF at 1 - 1e-4, hardcoded so the goodness-of-fit
    // tests below fail one run in ten thousand at most.
    const CHI2_CRIT_DF1: f64 = 15.1367;
    const CHI2_CRIT_DF3: f64 = 21.1075;

    #[test]
    fn same_path_reproduces_sequence() {
        let src = RandomSource::new(42);
        let a: Vec<u64> = {
            let mut s = src.stream(&[3, 1]);
            (0..16).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = src.stream(&[3, 1]);
            (0..16).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn sibling_paths_differ() {
        let src = RandomSource::new(42);
        let a = src.stream(&[0]).next_u64();
        let b = src.stream(&[1]).next_u64();
        let c = src.stream(&[]).next_u64();
        let d = RandomSource::new(43).stream(&[0]).next_u64();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn prefix_extension_differs_from_parent() {
        let src = RandomSource::new(7);
        let parent: Vec<u64> = {
            let mut s = src.stream(&[5]);
            (0..4).map(|_| s.next_u64()).collect()
        };
        let child = src.stream(&[5, 0]).next_u64();
        assert!(!parent.contains(&child));
    }

    #[test]
    fn next_f64_in_unit_interval_and_uniform() {
        let mut s = RandomSource::new(9).stream(&[0]);
        let n = 40_000;
        let mut counts = [0u32; 2];
        for _ in 0..n {
            let u = s.next_f64();
            assert!((0.0..1.0).contains(&u));
            counts[(u >= 0.5) as usize] += 1;
        }
        let expected = n as f64 / 2.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < CHI2_CRIT_DF1, "chi2 = {chi2}");
    }

    #[test]
    fn sample_index_matches_distribution() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let mut s = RandomSource::new(11).stream(&[2]);
        let n = 100_000;
        let mut counts = [0u32; 4];
        for _ in 0..n {
            counts[s.sample_index(&probs)] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < CHI2_CRIT_DF3, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn sample_index_skips_zero_probability() {
        let probs = [0.0, 0.5, 0.0, 0.5];
        let mut s = RandomSource::new(13).stream(&[0]);
        for _ in 0..1_000 {
            let i = s.sample_index(&probs);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn sample_step_follows_model_dynamics() {
        let m = bench::gen_example1();
        let s = bench::state_named(&m, "s");
        let a = m.actions().next().unwrap();
        let mut stream = RandomSource::new(17).stream(&[0]);
        let (mut saw_t, mut saw_u) = (0u32, 0u32);
        for _ in 0..2_000 {
            let (next, obs, r) = stream.sample_step(&m, s, a);
            assert_eq!(r, 0.0);
            // Observations are identity in this model.
            assert_eq!(obs.index(), next.index());
            match m.state_name(next) {
                "t" => saw_t += 1,
                "u" => saw_u += 1,
                other => panic!("unreachable successor {other}"),
            }
        }
        let chi2 = {
            let e = 1_000.0;
            (saw_t as f64 - e).powi(2) / e + (saw_u as f64 - e).powi(2) / e
        };
        assert!(chi2 < CHI2_CRIT_DF1, "chi2 = {chi2}");
    }
}
