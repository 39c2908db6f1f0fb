//! The three concurrent recursive estimators.
//!
//! Per step, with the same diminishing step size:
//!
//! 1. projected stochastic gradient ascent on the conditional likelihood,
//!    `theta <- proj_H(theta + eps * S)`, with the belief and Jacobian
//!    advanced at the pre-update parameters;
//! 2. a belief-weighted Q-table update driven by the estimated transition
//!    `p(s_prev, s_cur)`, the outer product of two filtered posteriors;
//! 3. a joint transition-table update driven by the same pair estimate.
//!
//! The Q and joint-transition updates are asynchronous: only the column or
//! slice of the pairing action moves. By default they consume the reward and
//! action of the previous step, which is what caused the transition the pair
//! estimate describes; the literal current-step pairing is available behind
//! [`QTiming::Immediate`] for comparison.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::filter::{self, FilterState};
#[cfg(not(feature = "std"))]
use crate::math::F64Ext;
use crate::pomdp::{BehaviorPolicy, ExtendedObs};
use crate::theta::{HBounds, InitRanges, StepSchedule, ThetaParams};
use crate::{Error, Result};

/// Extra slack added above `R_max / (1 - gamma)` when deriving Q bounds.
const Q_BOUND_MARGIN: f64 = 1.0;

/// Filtered posterior `P(s = i | y, u) = b_i u_i / (b' u)`.
pub fn posterior_state(
    y: &ExtendedObs,
    belief: &[f64],
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
) -> Result<Vec<f64>> {
    let lik = filter::guarded_emission(y, theta, policy, belief)?;
    Ok(belief
        .iter()
        .zip(&lik.b)
        .map(|(ui, bi)| bi * ui / lik.total)
        .collect())
}

/// Estimated transition pair `p(s_prev = i, s_cur = j)`: the outer product
/// of the two filtered posteriors, an `I x I` matrix summing to one.
pub fn posterior_transition(prev: &[f64], cur: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; prev.len() * cur.len()];
    for (i, &pi) in prev.iter().enumerate() {
        for (j, &cj) in cur.iter().enumerate() {
            out[i * cur.len() + j] = pi * cj;
        }
    }
    out
}

/// One projected-gradient step of the likelihood estimator.
///
/// Returns the projected parameters together with the advanced filter state;
/// the belief and Jacobian advance at the old parameters.
pub fn hmm_sgd_step(
    theta: &ThetaParams,
    state: &FilterState,
    y: &ExtendedObs,
    epsilon: f64,
    policy: &BehaviorPolicy,
    bounds: &HBounds,
) -> Result<(ThetaParams, FilterState)> {
    let score = filter::score(y, state, theta, policy)?;
    let mut theta_next = theta.clone();
    theta_next.add_scaled(epsilon, &score);
    let theta_next = theta_next.projected(bounds);
    let state_next = filter::advance(y, state, theta, policy)?;
    Ok((theta_next, state_next))
}

/// Tabular action-value estimate with clamped entries.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_rows: usize,
    num_actions: usize,
    values: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl QTable {
    /// All-zero table clamped to `[lo, hi]` (which must contain zero).
    pub fn zeros(num_rows: usize, num_actions: usize, lo: f64, hi: f64) -> Self {
        assert!(lo <= 0.0 && hi >= 0.0, "bounds must contain the zero start");
        Self {
            num_rows,
            num_actions,
            values: vec![0.0; num_rows * num_actions],
            lo,
            hi,
        }
    }

    /// Bounds derived from the largest admissible reward magnitude:
    /// `|Q| <= R_max / (1 - gamma)` plus a small margin.
    pub fn with_reward_bound(
        num_rows: usize,
        num_actions: usize,
        reward_abs_bound: f64,
        discount: f64,
    ) -> Self {
        let hi = reward_abs_bound / (1.0 - discount) + Q_BOUND_MARGIN;
        Self::zeros(num_rows, num_actions, -hi, hi)
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn get(&self, row: usize, action: usize) -> f64 {
        self.values[row * self.num_actions + action]
    }

    pub fn set(&mut self, row: usize, action: usize, value: f64) {
        self.values[row * self.num_actions + action] = value.clamp(self.lo, self.hi);
    }

    /// Row-major `rows x actions` backing slice.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Replaces the backing values wholesale (checkpoint restore).
    pub fn restore_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::InvalidInput("Q value count mismatch".into()));
        }
        self.values = values;
        Ok(())
    }

    /// `max_a Q(row, a)`.
    pub fn max_over_actions(&self, row: usize) -> f64 {
        self.values[row * self.num_actions..][..self.num_actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_{row, a} Q(row, a)`.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action for a row; ties break toward the lowest index.
    pub fn greedy(&self, row: usize) -> usize {
        let row_vals = &self.values[row * self.num_actions..][..self.num_actions];
        let mut best = 0;
        for (a, &v) in row_vals.iter().enumerate() {
            if v > row_vals[best] {
                best = a;
            }
        }
        best
    }

    /// Belief-weighted asynchronous update of column `action`:
    ///
    /// ```text
    /// q(i, a) += eps * sum_j pair(i, j) * (r + gamma * max_a' q(j, a') - q(i, a))
    /// ```
    ///
    /// Stale maxima are used on the right-hand side (the whole column moves
    /// against the pre-update table), entries are clamped afterwards, and
    /// all other columns stay untouched.
    pub fn weighted_update(
        &mut self,
        pair: &[f64],
        reward: f64,
        action: usize,
        epsilon: f64,
        discount: f64,
    ) {
        let n = self.num_rows;
        debug_assert_eq!(pair.len(), n * n);
        let maxes: Vec<f64> = (0..n).map(|j| self.max_over_actions(j)).collect();
        for i in 0..n {
            let q_ia = self.get(i, action);
            let mut delta = 0.0;
            for j in 0..n {
                delta += pair[i * n + j] * (reward + discount * maxes[j] - q_ia);
            }
            self.set(i, action, q_ia + epsilon * delta);
        }
    }

    /// Classical single-entry update from a fully observed transition.
    pub fn watkins_update(
        &mut self,
        row: usize,
        action: usize,
        reward: f64,
        next_row: usize,
        epsilon: f64,
        discount: f64,
    ) {
        let q = self.get(row, action);
        let target = reward + discount * self.max_over_actions(next_row);
        self.set(row, action, q + epsilon * (target - q));
    }
}

/// How the joint transition estimate moves toward the pair estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionUpdateMode {
    /// `t += eps * (pair - t)`: a Robbins-Monro running mean whose fixed
    /// point is the stationary pair probability. The default.
    Averaging,
    /// `t += eps * pair * (1 - t)`: the literal recursion; any pair entry
    /// bounded away from zero drives the estimate to one.
    Literal,
}

/// Joint occupancy estimate of `(s, a, s')` triples, entries in `[0, 1]`,
/// laid out `[s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransitionTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl JointTransitionTable {
    /// Uninformative start: every entry `1 / I`.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![1.0 / num_states as f64; num_states * num_actions * num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.values[(s * self.num_actions + a) * self.num_states + s_next]
    }

    /// `[s][a][s']`-ordered backing slice.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Replaces the backing values wholesale (checkpoint restore).
    pub fn restore_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::InvalidInput("joint table value count mismatch".into()));
        }
        self.values = values;
        Ok(())
    }

    /// Moves slice `action` toward the pair estimate; `epsilon` must lie in
    /// `[0, 1]` so entries stay in `[0, 1]` in both modes.
    pub fn update(&mut self, pair: &[f64], action: usize, epsilon: f64, mode: TransitionUpdateMode) {
        let n = self.num_states;
        debug_assert_eq!(pair.len(), n * n);
        debug_assert!((0.0..=1.0).contains(&epsilon));
        for i in 0..n {
            for j in 0..n {
                let idx = (i * self.num_actions + action) * n + j;
                let t = self.values[idx];
                let p = pair[i * n + j];
                self.values[idx] = match mode {
                    TransitionUpdateMode::Averaging => t + epsilon * (p - t),
                    TransitionUpdateMode::Literal => t + epsilon * p * (1.0 - t),
                };
            }
        }
    }

    /// Conditional transition tensor `T(a, s, s') = t(s, a, s') / sum_s'' t(s, a, s'')`
    /// in `[a][s][s']` layout, plus the `(s, a)` pairs whose marginal was zero
    /// (those rows fall back to uniform).
    pub fn normalized(&self) -> (Vec<f64>, Vec<(usize, usize)>) {
        let n = self.num_states;
        let k = self.num_actions;
        let mut cond = vec![0.0; k * n * n];
        let mut unvisited = Vec::new();
        for s in 0..n {
            for a in 0..k {
                let marginal: f64 = (0..n).map(|s2| self.get(s, a, s2)).sum();
                for s2 in 0..n {
                    cond[(a * n + s) * n + s2] = if marginal > 0.0 {
                        self.get(s, a, s2) / marginal
                    } else {
                        1.0 / n as f64
                    };
                }
                if marginal <= 0.0 {
                    unvisited.push((s, a));
                }
            }
        }
        (cond, unvisited)
    }
}

/// Which reward/action pairing feeds the Q and joint-transition updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QTiming {
    /// Previous step's reward and action: the pair estimate describes the
    /// transition that reward and action caused. The default.
    Lagged,
    /// Current step's reward and action, matching the update equations read
    /// literally.
    Immediate,
}

/// Static configuration of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub num_states: usize,
    pub num_obs: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub schedule: StepSchedule,
    pub bounds: HBounds,
    pub init: InitRanges,
    pub t_mode: TransitionUpdateMode,
    pub q_timing: QTiming,
}

impl SessionConfig {
    /// Defaults everywhere except the problem dimensions and discount.
    pub fn new(num_states: usize, num_obs: usize, num_actions: usize, discount: f64) -> Self {
        Self {
            num_states,
            num_obs,
            num_actions,
            discount,
            schedule: StepSchedule::default(),
            bounds: HBounds::default(),
            init: InitRanges::default(),
            t_mode: TransitionUpdateMode::Averaging,
            q_timing: QTiming::Lagged,
        }
    }
}

/// Everything returned by one session step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epsilon: f64,
    /// `log(b' u)` evaluated at the pre-update parameters and belief.
    pub log_likelihood: f64,
    /// Whether the underflow guard rescaled the emission this step.
    pub guard_tripped: bool,
}

/// One full estimation run: parameters, filter, Q and transition tables,
/// and the rotation registers pairing each transition estimate with the
/// reward and action that caused it.
#[derive(Debug, Clone)]
pub struct EstimatorSession {
    config: SessionConfig,
    policy: BehaviorPolicy,
    theta: ThetaParams,
    filter: FilterState,
    q: QTable,
    joint: JointTransitionTable,
    posterior_prev: Vec<f64>,
    reward_prev: f64,
    action_prev: usize,
    step: u64,
    guard_events: u64,
}

impl EstimatorSession {
    /// Fresh session: random near-uniform parameters, uniform belief, zero
    /// Jacobian, zero Q, uniform joint table, uniform previous posterior,
    /// random previous action, zero previous reward.
    pub fn new<R: Rng + ?Sized>(
        config: SessionConfig,
        policy: BehaviorPolicy,
        rng: &mut R,
    ) -> Result<Self> {
        if policy.num_obs() != config.num_obs || policy.num_actions() != config.num_actions {
            return Err(Error::InvalidInput("behavior policy dimensions do not match the session".into()));
        }
        let theta = ThetaParams::init_random(
            config.num_states,
            config.num_obs,
            config.num_actions,
            &config.init,
            rng,
        )
        .projected(&config.bounds);
        let filter = FilterState::new_uniform(config.num_states, theta.param_count());
        let q = QTable::with_reward_bound(
            config.num_states,
            config.num_actions,
            config.bounds.reward_abs_bound(),
            config.discount,
        );
        let joint = JointTransitionTable::uniform(config.num_states, config.num_actions);
        let posterior_prev = vec![1.0 / config.num_states as f64; config.num_states];
        let action_prev = rng.random_range(0..config.num_actions);
        Ok(Self {
            config,
            policy,
            theta,
            filter,
            q,
            joint,
            posterior_prev,
            reward_prev: 0.0,
            action_prev,
            step: 0,
            guard_events: 0,
        })
    }

    /// Rebuilds a session mid-run (checkpoint restore).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: SessionConfig,
        policy: BehaviorPolicy,
        theta: ThetaParams,
        filter: FilterState,
        q: QTable,
        joint: JointTransitionTable,
        posterior_prev: Vec<f64>,
        reward_prev: f64,
        action_prev: usize,
        step: u64,
    ) -> Result<Self> {
        if posterior_prev.len() != config.num_states || action_prev >= config.num_actions {
            return Err(Error::InvalidInput("rotation registers do not match the session dimensions".into()));
        }
        Ok(Self {
            config,
            policy,
            theta,
            filter,
            q,
            joint,
            posterior_prev,
            reward_prev,
            action_prev,
            step,
            guard_events: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn policy(&self) -> &BehaviorPolicy {
        &self.policy
    }

    pub fn theta(&self) -> &ThetaParams {
        &self.theta
    }

    pub fn filter(&self) -> &FilterState {
        &self.filter
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn joint_table(&self) -> &JointTransitionTable {
        &self.joint
    }

    pub fn posterior_prev(&self) -> &[f64] {
        &self.posterior_prev
    }

    pub fn reward_prev(&self) -> f64 {
        self.reward_prev
    }

    pub fn action_prev(&self) -> usize {
        self.action_prev
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// How many steps tripped the emission underflow guard.
    pub fn guard_events(&self) -> u64 {
        self.guard_events
    }

    /// Consumes one extended observation: likelihood gradient ascent on the
    /// parameters, filter advance at the pre-update parameters, filtered
    /// posterior, pair estimate against the previous posterior, Q and joint
    /// updates under the configured pairing, register rotation.
    pub fn step(&mut self, y: &ExtendedObs) -> Result<StepRecord> {
        let n = self.step + 1;
        let epsilon = self.config.schedule.step_size(n);

        let lik = filter::guarded_emission(y, &self.theta, &self.policy, self.filter.belief())?;
        let log_likelihood = lik.total.ln() + lik.log_shift;
        let guard_tripped = lik.log_shift != 0.0;
        if guard_tripped {
            self.guard_events += 1;
        }

        let (theta_next, filter_next) = hmm_sgd_step(
            &self.theta,
            &self.filter,
            y,
            epsilon,
            &self.policy,
            &self.config.bounds,
        )?;

        let posterior = posterior_state(y, self.filter.belief(), &self.theta, &self.policy)?;
        let pair = posterior_transition(&self.posterior_prev, &posterior);
        let (reward_used, action_used) = match self.config.q_timing {
            QTiming::Lagged => (self.reward_prev, self.action_prev),
            QTiming::Immediate => (y.reward, y.action),
        };
        self.q.weighted_update(
            &pair,
            reward_used,
            action_used,
            epsilon,
            self.config.discount,
        );
        self.joint
            .update(&pair, action_used, epsilon.min(1.0), self.config.t_mode);

        self.posterior_prev = posterior;
        self.reward_prev = y.reward;
        self.action_prev = y.action;
        self.theta = theta_next;
        self.filter = filter_next;
        self.step = n;

        Ok(StepRecord {
            step: n,
            epsilon,
            log_likelihood,
            guard_tripped,
        })
    }
}
