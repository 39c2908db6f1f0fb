//! Ground-truth POMDP model, behavior policy, and step-by-step simulation.
//!
//! The model is the tuple `(T, R, O, sigma, gamma)` on finite state, action,
//! and observation sets. At each step the agent observes `o ~ O(s, .)`, acts
//! `a ~ mu(o, .)` under the behavior policy, receives `r = R(a, s) + noise`,
//! and the state moves by `T(a, s, .)`. Under a fixed behavior policy the
//! state sequence is a Markov chain with marginal transition matrix
//!
//! ```text
//! P(s, s') = sum_o O(s, o) sum_a mu(o, a) T(a, s, s')
//! ```
//!
//! and the triple `y = (o, a, r)` is a state-conditional emission, so the
//! controlled POMDP is a hidden Markov model over extended observations.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Row-sum tolerance for stochastic matrices supplied from outside.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// One extended observation `(o, a, r)` emitted by a single environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedObs {
    pub obs: usize,
    pub action: usize,
    pub reward: f64,
}

/// A finite POMDP with tabular transition, reward, and observation models.
///
/// Indexing convention: `transition[a][s][s']`, `reward_mean[a][s]`,
/// `obs[s][o]`, all stored row-major in flat vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    num_states: usize,
    num_actions: usize,
    num_obs: usize,
    transition: Vec<f64>,
    reward_mean: Vec<f64>,
    obs: Vec<f64>,
    noise_sigma: f64,
    discount: f64,
}

impl PomdpModel {
    /// Validates dimensions, stochasticity of every `T` and `O` row
    /// (within [`STOCHASTIC_TOL`]), `noise_sigma >= 0`, and `discount` in
    /// `[0, 1)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        num_obs: usize,
        transition: Vec<f64>,
        reward_mean: Vec<f64>,
        obs: Vec<f64>,
        noise_sigma: f64,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || num_obs == 0 {
            return Err(Error::InvalidInput("state, action, and observation counts must be positive".into()));
        }
        if transition.len() != num_actions * num_states * num_states {
            return Err(Error::InvalidInput(format!(
                "transition length {} != K*I*I = {}",
                transition.len(),
                num_actions * num_states * num_states
            )));
        }
        if reward_mean.len() != num_actions * num_states {
            return Err(Error::InvalidInput(format!(
                "reward length {} != K*I = {}",
                reward_mean.len(),
                num_actions * num_states
            )));
        }
        if obs.len() != num_states * num_obs {
            return Err(Error::InvalidInput(format!(
                "observation length {} != I*J = {}",
                obs.len(),
                num_states * num_obs
            )));
        }
        for a in 0..num_actions {
            for s in 0..num_states {
                let row = &transition[(a * num_states + s) * num_states..][..num_states];
                check_distribution_row(row, &format!("transition[{a}][{s}]"))?;
            }
        }
        for s in 0..num_states {
            let row = &obs[s * num_obs..][..num_obs];
            check_distribution_row(row, &format!("obs[{s}]"))?;
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidInput(format!("noise_sigma must be finite and >= 0, got {noise_sigma}")));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidInput(format!("discount must lie in [0, 1), got {discount}")));
        }
        Ok(Self {
            num_states,
            num_actions,
            num_obs,
            transition,
            reward_mean,
            obs,
            noise_sigma,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `P(s' | s, a)`.
    pub fn transition_prob(&self, a: usize, s: usize, s_next: usize) -> f64 {
        self.transition[(a * self.num_states + s) * self.num_states + s_next]
    }

    /// The row `T(a, s, .)`.
    pub fn transition_row(&self, a: usize, s: usize) -> &[f64] {
        &self.transition[(a * self.num_states + s) * self.num_states..][..self.num_states]
    }

    /// Mean reward `r(s, a)`.
    pub fn reward_mean(&self, a: usize, s: usize) -> f64 {
        self.reward_mean[a * self.num_states + s]
    }

    /// The full `K x I` mean-reward table, action-major.
    pub fn reward_table(&self) -> &[f64] {
        &self.reward_mean
    }

    /// `P(o | s)`.
    pub fn obs_prob(&self, s: usize, o: usize) -> f64 {
        self.obs[s * self.num_obs + o]
    }

    /// The row `O(s, .)`.
    pub fn obs_row(&self, s: usize) -> &[f64] {
        &self.obs[s * self.num_obs..][..self.num_obs]
    }

    /// The full `I x J` observation matrix, state-major.
    pub fn obs_matrix(&self) -> &[f64] {
        &self.obs
    }

    /// The full `K x I x I` transition tensor, action-major.
    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    /// Draws an observation from `O(s, .)`.
    pub fn sample_obs<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(self.obs_row(s), rng)
    }

    /// Draws `r(s, a) + noise`, Gaussian noise with std `noise_sigma`.
    pub fn sample_reward<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.reward_mean(a, s) + self.noise_sigma * z
    }

    /// Draws the next state from `T(a, s, .)`.
    pub fn sample_next_state<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(self.transition_row(a, s), rng)
    }

    /// Draws an initial state uniformly over the state set.
    pub fn sample_uniform_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.num_states)
    }
}

/// A fixed observation-conditioned action distribution `mu(o, a) = P(a | o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    num_obs: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl BehaviorPolicy {
    /// Validates that every row `mu(o, .)` is a distribution.
    pub fn new(num_obs: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_obs == 0 || num_actions == 0 {
            return Err(Error::InvalidInput("observation and action counts must be positive".into()));
        }
        if probs.len() != num_obs * num_actions {
            return Err(Error::InvalidInput(format!(
                "policy length {} != J*K = {}",
                probs.len(),
                num_obs * num_actions
            )));
        }
        for o in 0..num_obs {
            let row = &probs[o * num_actions..][..num_actions];
            check_distribution_row(row, &format!("policy[{o}]"))?;
        }
        Ok(Self {
            num_obs,
            num_actions,
            probs,
        })
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `P(a | o)`.
    pub fn prob(&self, o: usize, a: usize) -> f64 {
        self.probs[o * self.num_actions + a]
    }

    /// The row `mu(o, .)`.
    pub fn row(&self, o: usize) -> &[f64] {
        &self.probs[o * self.num_actions..][..self.num_actions]
    }

    /// The full `J x K` table, observation-major.
    pub fn table(&self) -> &[f64] {
        &self.probs
    }

    /// Draws an action from `mu(o, .)`.
    pub fn sample_action<R: Rng + ?Sized>(&self, o: usize, rng: &mut R) -> usize {
        sample_index(self.row(o), rng)
    }
}

/// Simulates one environment step from state `s` under the behavior policy.
///
/// Draws `o ~ O(s, .)`, `a ~ mu(o, .)`, `r = r(s, a) + noise`, and
/// `s' ~ T(a, s, .)`, in that order, and returns `((o, a, r), s')`.
pub fn sample_step<R: Rng + ?Sized>(
    model: &PomdpModel,
    policy: &BehaviorPolicy,
    s: usize,
    rng: &mut R,
) -> Result<(ExtendedObs, usize)> {
    if s >= model.num_states() {
        return Err(Error::InvalidInput(format!(
            "state index {s} out of range for {} states",
            model.num_states()
        )));
    }
    if policy.num_obs() != model.num_obs() || policy.num_actions() != model.num_actions() {
        return Err(Error::InvalidInput("policy dimensions do not match the model".into()));
    }
    let obs = model.sample_obs(s, rng);
    let action = policy.sample_action(obs, rng);
    let reward = model.sample_reward(s, action, rng);
    let s_next = model.sample_next_state(s, action, rng);
    Ok((
        ExtendedObs {
            obs,
            action,
            reward,
        },
        s_next,
    ))
}

/// The marginal state chain `P(s, s') = sum_o O(s, o) sum_a mu(o, a) T(a, s, s')`
/// induced by running the behavior policy, as a row-stochastic `I x I` matrix.
pub fn derive_behavior_chain(model: &PomdpModel, policy: &BehaviorPolicy) -> Vec<f64> {
    let n = model.num_states();
    let mut chain = alloc::vec![0.0; n * n];
    for s in 0..n {
        for o in 0..model.num_obs() {
            let po = model.obs_prob(s, o);
            for a in 0..model.num_actions() {
                let pa = policy.prob(o, a);
                if po * pa == 0.0 {
                    continue;
                }
                for s_next in 0..n {
                    chain[s * n + s_next] += po * pa * model.transition_prob(a, s, s_next);
                }
            }
        }
    }
    chain
}

/// Whether the row-stochastic chain `p` (given as `I x I` row-major) is
/// irreducible and aperiodic.
///
/// Decided by the regularity criterion: the chain is ergodic iff some power
/// `P^m`, `m <= I^2`, has all entries strictly positive. Only the sparsity
/// pattern matters, so the powers are computed over booleans.
pub fn check_ergodic(p: &[f64], num_states: usize) -> bool {
    assert_eq!(p.len(), num_states * num_states, "chain must be I x I");
    let n = num_states;
    let adj: Vec<bool> = p.iter().map(|&x| x > 0.0).collect();
    let mut power = adj.clone();
    for _ in 0..n * n {
        if power.iter().all(|&x| x) {
            return true;
        }
        let mut next = alloc::vec![false; n * n];
        for i in 0..n {
            for k in 0..n {
                if power[i * n + k] {
                    for j in 0..n {
                        if adj[k * n + j] {
                            next[i * n + j] = true;
                        }
                    }
                }
            }
        }
        if next == power {
            // Sparsity pattern reached a fixed point short of full support.
            return false;
        }
        power = next;
    }
    power.iter().all(|&x| x)
}

fn check_distribution_row(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &x in row {
        if !(x >= 0.0) {
            return Err(Error::InvalidInput(format!("{what} has negative or NaN entry {x}")));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidInput(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Draws an index from an unnormalized-by-at-most-`STOCHASTIC_TOL`
/// probability row by inverse CDF walk.
fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if x < acc {
            return i;
        }
    }
    weights.len() - 1
}
