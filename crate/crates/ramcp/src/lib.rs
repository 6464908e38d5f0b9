//! Risk-aware Monte Carlo planning for POMDPs.
//!
//! The planner maximizes expected discounted payoff subject to a probabilistic
//! lower bound on the payoff itself: among policies whose probability of
//! returning a discounted payoff below a threshold `tau` is at most `alpha`,
//! it searches for the one with the best expectation. Planning is online and
//! anytime: a POMCP-style search tree estimates values, an explicit tree of
//! exactly-weighted safe histories tracks how much payoff mass is provably
//! above the threshold, and each executed action is drawn from the solution of
//! a small constrained-MDP linear program built from those trees.
//!
//! Crate layout:
//! - [`model`]: POMDP representation, belief arithmetic, horizon reduction
//! - [`sampler`]: seeded, splittable random streams and generative sampling
//! - [`search`]: the sampled search tree (UCB selection, rollouts)
//! - [`risk`]: the explicit tree of safe histories and its risk values
//! - [`lp`]: a self-contained dense two-phase simplex solver
//! - [`cmdp`]: per-step constrained-MDP assembly and action decisions
//! - [`agent`]: the online planning loop (explore / select / play)
//! - [`oracle`]: exact small-instance solvers used as ground truth
//! - [`bench`]: benchmark model generators

pub mod agent;
pub mod bench;
pub mod cmdp;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod risk;
pub mod sampler;
pub mod search;
