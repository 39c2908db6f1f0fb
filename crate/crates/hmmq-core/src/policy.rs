//! Frozen-parameter dynamic policy and the episodic evaluation protocol.
//!
//! After training stops, the learned parameters are frozen into an
//! action-conditioned belief filter,
//!
//! ```text
//! u_next = T(a)' B(y) u / (b' u),
//! ```
//!
//! driven by the conditional transition tensor recovered from the joint
//! table and by the learned observation/reward models. Actions maximize the
//! expected learned Q value under the belief conditioned on the current
//! observation,
//!
//! ```text
//! a* = argmax_a sum_i Q(i, a) P(s = i | o, u),
//! P(s = i | o, u) = O(i, o) u_i / sum_j O(j, o) u_j.
//! ```
//!
//! The frozen emission drops the behavior-policy factor: at test time the
//! actions come from the greedy rule, not from the exploration policy, and
//! the factor would be parameter-independent anyway.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::estim::{EstimatorSession, QTable};
#[cfg(not(feature = "std"))]
use crate::math::F64Ext;
use crate::pomdp::{ExtendedObs, PomdpModel};
use crate::theta::gaussian_density;
use crate::{Error, Result};

/// Belief total mass below which the frozen emission is renormalized.
const GUARD_MIN: f64 = 1e-300;

/// A learned model snapshot: conditional transitions, observation matrix,
/// reward table, noise scale, and the Q table, all frozen at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenModel {
    num_states: usize,
    num_actions: usize,
    num_obs: usize,
    /// `[a][s][s']` conditional transition tensor, rows stochastic.
    transition: Vec<f64>,
    /// `[s][o]` observation matrix, rows stochastic.
    obs: Vec<f64>,
    /// `[a][s]` reward means.
    reward: Vec<f64>,
    sigma: f64,
    q: QTable,
}

impl FrozenModel {
    /// Freezes a training session: realizes the current parameters and
    /// normalizes the joint transition table into conditionals.
    pub fn from_session(session: &EstimatorSession) -> Self {
        let realized = session.theta().realize();
        let (transition, _unvisited) = session.joint_table().normalized();
        Self {
            num_states: session.config().num_states,
            num_actions: session.config().num_actions,
            num_obs: session.config().num_obs,
            transition,
            obs: realized.obs,
            reward: realized.reward,
            sigma: realized.sigma,
            q: session.q_table().clone(),
        }
    }

    /// Assembles a snapshot from explicit parts (tests, oracle policies).
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        num_obs: usize,
        transition: Vec<f64>,
        obs: Vec<f64>,
        reward: Vec<f64>,
        sigma: f64,
        q: QTable,
    ) -> Result<Self> {
        if transition.len() != num_actions * num_states * num_states
            || obs.len() != num_states * num_obs
            || reward.len() != num_actions * num_states
        {
            return Err(Error::InvalidInput("frozen model part lengths do not match".into()));
        }
        if !q.values().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("frozen Q table must be finite".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            num_obs,
            transition,
            obs,
            reward,
            sigma,
            q,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    /// `[a][s][s']` conditional transition tensor.
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// `[s][o]` observation matrix.
    pub fn obs_matrix(&self) -> &[f64] {
        &self.obs
    }

    /// Frozen emission without the behavior-policy factor:
    /// `b_i = O(i, o) * N(r; R(a, i), sigma^2)`.
    fn emission(&self, y: &ExtendedObs) -> Vec<f64> {
        (0..self.num_states)
            .map(|i| {
                self.obs[i * self.num_obs + y.obs]
                    * gaussian_density(
                        y.reward,
                        self.reward[y.action * self.num_states + i],
                        self.sigma,
                    )
            })
            .collect()
    }

    /// Log of the frozen emission, for the underflow guard.
    fn emission_log(&self, y: &ExtendedObs) -> Vec<f64> {
        let norm = (self.sigma * core::f64::consts::TAU.sqrt()).ln();
        (0..self.num_states)
            .map(|i| {
                let z = (y.reward - self.reward[y.action * self.num_states + i]) / self.sigma;
                self.obs[i * self.num_obs + y.obs].ln() - 0.5 * z * z - norm
            })
            .collect()
    }
}

/// One action-conditioned filter step under the frozen model; output on the
/// simplex.
pub fn belief_step_with_action(
    belief: &[f64],
    y: &ExtendedObs,
    frozen: &FrozenModel,
) -> Result<Vec<f64>> {
    let n = frozen.num_states;
    debug_assert_eq!(belief.len(), n);
    let mut b = frozen.emission(y);
    let mut total: f64 = b.iter().zip(belief).map(|(bi, ui)| bi * ui).sum();
    if !(total > GUARD_MIN) {
        // Log-space rebuild shifted by the largest entry; the scale cancels
        // in the normalized update.
        let logs = frozen.emission_log(y);
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::DegenerateLikelihood);
        }
        b = logs.iter().map(|l| (l - shift).exp()).collect();
        total = b.iter().zip(belief).map(|(bi, ui)| bi * ui).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateLikelihood);
        }
    }
    let mut next = vec![0.0; n];
    for i in 0..n {
        let w = b[i] * belief[i] / total;
        if w == 0.0 {
            continue;
        }
        let row = &frozen.transition[(y.action * n + i) * n..][..n];
        for j in 0..n {
            next[j] += row[j] * w;
        }
    }
    Ok(next)
}

/// Greedy action under the observation-conditioned belief; ties break toward
/// the lowest action index.
///
/// If the observation carries no mass under the belief, the prior belief
/// weights the Q expectation instead and the flag in the result is raised.
pub fn greedy_action(frozen: &FrozenModel, belief: &[f64], obs: usize) -> (usize, bool) {
    let n = frozen.num_states;
    let mut weights: Vec<f64> = (0..n)
        .map(|i| frozen.obs[i * frozen.num_obs + obs] * belief[i])
        .collect();
    let mass: f64 = weights.iter().sum();
    let degenerate = !(mass > 0.0);
    if degenerate {
        weights.copy_from_slice(belief);
    }
    let denom: f64 = if degenerate { 1.0 } else { mass };
    let mut best_action = 0;
    let mut best_value = f64::NEG_INFINITY;
    for a in 0..frozen.num_actions {
        let value: f64 = (0..n)
            .map(|i| frozen.q.get(i, a) * weights[i] / denom)
            .sum();
        if value > best_value {
            best_value = value;
            best_action = a;
        }
    }
    (best_action, degenerate)
}

/// The three policy classes compared in the study.
#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    /// Belief filter plus belief-weighted greedy actions on a frozen model.
    BeliefGreedy(&'a FrozenModel),
    /// Greedy on a state-keyed table (requires the true state).
    StateGreedy(&'a QTable),
    /// Greedy on an observation-keyed table.
    ObsGreedy(&'a QTable),
}

/// Evaluation summary over all episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    /// Mean of every reward collected, over `episodes * steps` samples.
    pub mean_reward: f64,
    /// How often the greedy rule fell back to prior weighting.
    pub fallback_events: u64,
}

/// Runs the episodic protocol: per episode a fresh initial state (uniform
/// unless pinned) and a uniform belief, then `steps` steps of observe,
/// act, collect reward, transition.
pub fn evaluate_policy<R: Rng + ?Sized>(
    model: &PomdpModel,
    policy: EvalPolicy<'_>,
    episodes: usize,
    steps: usize,
    rng: &mut R,
    initial_state: Option<usize>,
) -> Result<EvalOutcome> {
    if episodes == 0 || steps == 0 {
        return Err(Error::InvalidInput("episodes and steps must be positive".into()));
    }
    if let Some(s) = initial_state {
        if s >= model.num_states() {
            return Err(Error::InvalidInput("initial state out of range".into()));
        }
    }
    let mut total = 0.0;
    let mut fallback_events = 0;
    for _ in 0..episodes {
        let mut s = match initial_state {
            Some(s0) => s0,
            None => model.sample_uniform_state(rng),
        };
        let mut belief = vec![1.0 / model.num_states() as f64; model.num_states()];
        for _ in 0..steps {
            let obs = model.sample_obs(s, rng);
            let action = match policy {
                EvalPolicy::BeliefGreedy(frozen) => {
                    let (a, degenerate) = greedy_action(frozen, &belief, obs);
                    if degenerate {
                        fallback_events += 1;
                    }
                    a
                }
                EvalPolicy::StateGreedy(q) => q.greedy(s),
                EvalPolicy::ObsGreedy(q) => q.greedy(obs),
            };
            let reward = model.sample_reward(s, action, rng);
            total += reward;
            let s_next = model.sample_next_state(s, action, rng);
            if let EvalPolicy::BeliefGreedy(frozen) = policy {
                let y = ExtendedObs {
                    obs,
                    action,
                    reward,
                };
                belief = belief_step_with_action(&belief, &y, frozen)?;
            }
            s = s_next;
        }
    }
    Ok(EvalOutcome {
        mean_reward: total / (episodes * steps) as f64,
        fallback_events,
    })
}
