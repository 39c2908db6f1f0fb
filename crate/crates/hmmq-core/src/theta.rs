//! The estimator's parameter vector and its realization.
//!
//! The parameter vector packs, in flat order,
//!
//! ```text
//! [ p_logits (I*I) | o_logits (I*J) | r_values (K*I) | sigma ]
//! ```
//!
//! for a total of `L = I^2 + I*J + K*I + 1` reals. The two logit blocks
//! realize row-stochastic matrices through a row-wise softmax, so every
//! realized probability is strictly positive for any parameter value; the
//! reward table and the noise scale are taken directly. Iterates are kept in
//! a box constraint set by clamping, which is an exact Euclidean projection.
//!
//! Besides the realization this module carries the analytic derivatives the
//! filter recursion needs: the emission likelihood of one extended
//! observation and its gradient, and the gradient of the realized state
//! chain with respect to the logits.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::pomdp::{BehaviorPolicy, ExtendedObs};
#[cfg(not(feature = "std"))]
use crate::math::F64Ext;

/// Box constraint set: logits, reward values, and the noise scale are each
/// clamped to a closed interval. The defaults keep the softmax well away
/// from saturation and floor the noise scale so the reward density cannot
/// blow up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HBounds {
    pub logit_lo: f64,
    pub logit_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

impl Default for HBounds {
    fn default() -> Self {
        Self {
            logit_lo: -10.0,
            logit_hi: 10.0,
            sigma_lo: 0.1,
            sigma_hi: 5.0,
            r_lo: -1e3,
            r_hi: 1e3,
        }
    }
}

impl HBounds {
    /// Largest absolute reward value the box admits.
    pub fn reward_abs_bound(&self) -> f64 {
        self.r_lo.abs().max(self.r_hi.abs())
    }
}

/// Initialization ranges: logits and reward values i.i.d. uniform on a
/// symmetric interval, noise scale fixed.
///
/// The defaults commit to nothing: near-uniform probability rows, all
/// reward means at zero, and the noise scale at its ceiling so reward
/// attribution stays gentle until the beliefs carry transition structure.
/// Starting from a random reward labeling instead makes runs land in
/// relabeled local optima whose two actions disagree on the hidden-state
/// labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitRanges {
    pub logit_half_width: f64,
    pub r_half_width: f64,
    pub sigma: f64,
}

impl Default for InitRanges {
    fn default() -> Self {
        Self {
            logit_half_width: 0.5,
            r_half_width: 0.0,
            sigma: 5.0,
        }
    }
}

/// Diminishing step size `eps_n = scale * n^-exponent`, `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            scale: 1.0,
            exponent: 0.4,
        }
    }
}

impl StepSchedule {
    /// `eps_n` for step index `n >= 1` (panics on `n = 0`).
    pub fn step_size(&self, n: u64) -> f64 {
        assert!(n >= 1, "step index starts at 1");
        self.scale * (n as f64).powf(-self.exponent)
    }
}

/// Realized model parameters: the state chain and observation matrix from
/// the softmax blocks, the reward table and noise scale verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedParams {
    /// Row-stochastic `I x I` chain over hidden states under the behavior
    /// policy.
    pub chain: Vec<f64>,
    /// Row-stochastic `I x J` observation matrix.
    pub obs: Vec<f64>,
    /// `K x I` reward table, action-major.
    pub reward: Vec<f64>,
    /// Reward noise scale.
    pub sigma: f64,
}

/// The estimator's parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams {
    num_states: usize,
    num_obs: usize,
    num_actions: usize,
    p_logits: Vec<f64>,
    o_logits: Vec<f64>,
    r_values: Vec<f64>,
    sigma: f64,
}

impl ThetaParams {
    /// Assembles a parameter vector from its blocks, validating lengths.
    pub fn new(
        num_states: usize,
        num_obs: usize,
        num_actions: usize,
        p_logits: Vec<f64>,
        o_logits: Vec<f64>,
        r_values: Vec<f64>,
        sigma: f64,
    ) -> crate::Result<Self> {
        if p_logits.len() != num_states * num_states
            || o_logits.len() != num_states * num_obs
            || r_values.len() != num_actions * num_states
        {
            return Err(crate::Error::InvalidInput(alloc::format!(
                "parameter block lengths {}/{}/{} do not match I={num_states}, J={num_obs}, K={num_actions}",
                p_logits.len(),
                o_logits.len(),
                r_values.len()
            )));
        }
        Ok(Self {
            num_states,
            num_obs,
            num_actions,
            p_logits,
            o_logits,
            r_values,
            sigma,
        })
    }

    /// Near-uniform random start: logits and rewards i.i.d. uniform on
    /// symmetric intervals, noise scale from the range spec.
    pub fn init_random<R: Rng + ?Sized>(
        num_states: usize,
        num_obs: usize,
        num_actions: usize,
        ranges: &InitRanges,
        rng: &mut R,
    ) -> Self {
        let w = ranges.logit_half_width;
        let rw = ranges.r_half_width;
        let p_logits = (0..num_states * num_states)
            .map(|_| rng.random_range(-w..=w))
            .collect();
        let o_logits = (0..num_states * num_obs)
            .map(|_| rng.random_range(-w..=w))
            .collect();
        let r_values = (0..num_actions * num_states)
            .map(|_| rng.random_range(-rw..=rw))
            .collect();
        Self {
            num_states,
            num_obs,
            num_actions,
            p_logits,
            o_logits,
            r_values,
            sigma: ranges.sigma,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Total parameter count `L`.
    pub fn param_count(&self) -> usize {
        self.num_states * self.num_states
            + self.num_states * self.num_obs
            + self.num_actions * self.num_states
            + 1
    }

    pub fn p_logits(&self) -> &[f64] {
        &self.p_logits
    }

    pub fn o_logits(&self) -> &[f64] {
        &self.o_logits
    }

    pub fn r_values(&self) -> &[f64] {
        &self.r_values
    }

    pub fn sigma_param(&self) -> f64 {
        self.sigma
    }

    /// Flat index of the chain logit `(i, j)`.
    pub fn p_logit_index(&self, i: usize, j: usize) -> usize {
        i * self.num_states + j
    }

    /// Flat index of the observation logit `(i, j)`.
    pub fn o_logit_index(&self, i: usize, j: usize) -> usize {
        self.num_states * self.num_states + i * self.num_obs + j
    }

    /// Flat index of the reward value `(a, i)`.
    pub fn r_value_index(&self, a: usize, i: usize) -> usize {
        self.num_states * self.num_states + self.num_states * self.num_obs + a * self.num_states + i
    }

    /// Flat index of the noise scale (the last parameter).
    pub fn sigma_index(&self) -> usize {
        self.param_count() - 1
    }

    /// Reads parameter `l` in flat order.
    pub fn get(&self, l: usize) -> f64 {
        let np = self.p_logits.len();
        let no = self.o_logits.len();
        let nr = self.r_values.len();
        if l < np {
            self.p_logits[l]
        } else if l < np + no {
            self.o_logits[l - np]
        } else if l < np + no + nr {
            self.r_values[l - np - no]
        } else {
            debug_assert_eq!(l, self.sigma_index());
            self.sigma
        }
    }

    /// Writes parameter `l` in flat order.
    pub fn set(&mut self, l: usize, value: f64) {
        let np = self.p_logits.len();
        let no = self.o_logits.len();
        let nr = self.r_values.len();
        if l < np {
            self.p_logits[l] = value;
        } else if l < np + no {
            self.o_logits[l - np] = value;
        } else if l < np + no + nr {
            self.r_values[l - np - no] = value;
        } else {
            debug_assert_eq!(l, self.sigma_index());
            self.sigma = value;
        }
    }

    /// In-place `theta += step * direction` over the flat layout.
    pub fn add_scaled(&mut self, step: f64, direction: &[f64]) {
        debug_assert_eq!(direction.len(), self.param_count());
        let np = self.p_logits.len();
        let no = self.o_logits.len();
        let nr = self.r_values.len();
        for (x, d) in self.p_logits.iter_mut().zip(&direction[..np]) {
            *x += step * d;
        }
        for (x, d) in self.o_logits.iter_mut().zip(&direction[np..np + no]) {
            *x += step * d;
        }
        for (x, d) in self
            .r_values
            .iter_mut()
            .zip(&direction[np + no..np + no + nr])
        {
            *x += step * d;
        }
        self.sigma += step * direction[np + no + nr];
    }

    /// Exact Euclidean projection onto the box: every block clamped to its
    /// interval. Idempotent and non-expansive.
    pub fn projected(&self, bounds: &HBounds) -> Self {
        let clamp_all = |v: &[f64], lo: f64, hi: f64| v.iter().map(|&x| x.clamp(lo, hi)).collect();
        Self {
            num_states: self.num_states,
            num_obs: self.num_obs,
            num_actions: self.num_actions,
            p_logits: clamp_all(&self.p_logits, bounds.logit_lo, bounds.logit_hi),
            o_logits: clamp_all(&self.o_logits, bounds.logit_lo, bounds.logit_hi),
            r_values: clamp_all(&self.r_values, bounds.r_lo, bounds.r_hi),
            sigma: self.sigma.clamp(bounds.sigma_lo, bounds.sigma_hi),
        }
    }

    /// Realizes `(chain, obs, reward, sigma)` from the current parameters.
    pub fn realize(&self) -> RealizedParams {
        let mut chain = vec![0.0; self.num_states * self.num_states];
        for i in 0..self.num_states {
            softmax_row(
                &self.p_logits[i * self.num_states..][..self.num_states],
                &mut chain[i * self.num_states..][..self.num_states],
            );
        }
        let mut obs = vec![0.0; self.num_states * self.num_obs];
        for i in 0..self.num_states {
            softmax_row(
                &self.o_logits[i * self.num_obs..][..self.num_obs],
                &mut obs[i * self.num_obs..][..self.num_obs],
            );
        }
        RealizedParams {
            chain,
            obs,
            reward: self.r_values.clone(),
            sigma: self.sigma,
        }
    }
}

/// Per-state likelihood of one extended observation:
/// `b_i = O(i, o) * mu(o, a) * N(r; R(a, i), sigma^2)`.
///
/// Every entry is strictly positive whenever `mu(o, a) > 0`; the vector is
/// not normalized. The behavior policy is known to the estimator, so its
/// factor carries no parameter dependence.
pub fn emission(y: &ExtendedObs, theta: &ThetaParams, policy: &BehaviorPolicy) -> Vec<f64> {
    debug_assert!(y.obs < theta.num_obs && y.action < theta.num_actions);
    let mu = policy.prob(y.obs, y.action);
    let mut obs_row = vec![0.0; theta.num_obs];
    let mut b = vec![0.0; theta.num_states];
    for i in 0..theta.num_states {
        softmax_row(&theta.o_logits[i * theta.num_obs..][..theta.num_obs], &mut obs_row);
        let mean = theta.r_values[y.action * theta.num_states + i];
        b[i] = obs_row[y.obs] * mu * gaussian_density(y.reward, mean, theta.sigma);
    }
    b
}

/// Log of the emission vector, safe against density underflow. Entries may
/// be `-inf` when the policy factor is zero.
pub(crate) fn emission_log(
    y: &ExtendedObs,
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
) -> Vec<f64> {
    let log_mu = policy.prob(y.obs, y.action).ln();
    let mut obs_row = vec![0.0; theta.num_obs];
    let norm = (theta.sigma * core::f64::consts::TAU.sqrt()).ln();
    (0..theta.num_states)
        .map(|i| {
            softmax_row(&theta.o_logits[i * theta.num_obs..][..theta.num_obs], &mut obs_row);
            let z = (y.reward - theta.r_values[y.action * theta.num_states + i]) / theta.sigma;
            obs_row[y.obs].ln() + log_mu - 0.5 * z * z - norm
        })
        .collect()
}

/// Gradient of the emission vector with respect to every parameter, as an
/// `L x I` table laid out `[l * I + i]`.
///
/// Nonzero blocks:
/// * observation logits of state `i`: `b_i * (1{j = o} - O(i, j))`;
/// * reward value `(a, i)` for the taken action: `b_i * (r - R(a, i)) / sigma^2`;
/// * noise scale: `b_i * ((r - R(a, i))^2 / sigma^3 - 1 / sigma)`.
///
/// Chain logits never enter the emission, so their block is zero.
pub fn emission_grad(y: &ExtendedObs, theta: &ThetaParams, policy: &BehaviorPolicy) -> Vec<f64> {
    let b = emission(y, theta, policy);
    emission_grad_given_b(y, theta, &b)
}

/// Same gradient table built from an already-computed (possibly rescaled)
/// emission vector; the gradient scales with `b`.
pub(crate) fn emission_grad_given_b(y: &ExtendedObs, theta: &ThetaParams, b: &[f64]) -> Vec<f64> {
    let num_states = theta.num_states;
    let len = theta.param_count();
    let mut grad = vec![0.0; len * num_states];
    let mut obs_row = vec![0.0; theta.num_obs];
    let sigma = theta.sigma;
    for i in 0..num_states {
        softmax_row(&theta.o_logits[i * theta.num_obs..][..theta.num_obs], &mut obs_row);
        for j in 0..theta.num_obs {
            let indicator = if j == y.obs { 1.0 } else { 0.0 };
            grad[theta.o_logit_index(i, j) * num_states + i] = b[i] * (indicator - obs_row[j]);
        }
        let resid = y.reward - theta.r_values[y.action * num_states + i];
        grad[theta.r_value_index(y.action, i) * num_states + i] = b[i] * resid / (sigma * sigma);
        grad[theta.sigma_index() * num_states + i] =
            b[i] * (resid * resid / (sigma * sigma * sigma) - 1.0 / sigma);
    }
    grad
}

/// Gradient of the realized chain with respect to every parameter, as an
/// `L x I x I` table laid out `[l * I * I + i * I + j]`.
///
/// Only chain logits contribute: `dP(i, j)/d p_logit(i, k) =
/// P(i, j) * (1{j = k} - P(i, k))`, so every derivative row sums to zero.
pub fn transition_grad(theta: &ThetaParams) -> Vec<f64> {
    let n = theta.num_states;
    let len = theta.param_count();
    let mut grad = vec![0.0; len * n * n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        softmax_row(&theta.p_logits[i * n..][..n], &mut row);
        for k in 0..n {
            let l = theta.p_logit_index(i, k);
            for j in 0..n {
                let indicator = if j == k { 1.0 } else { 0.0 };
                grad[l * n * n + i * n + j] = row[j] * (indicator - row[k]);
            }
        }
    }
    grad
}

/// Stable row softmax into `out`.
pub(crate) fn softmax_row(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Density of `N(mean, sigma^2)` at `x`.
pub(crate) fn gaussian_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * core::f64::consts::TAU.sqrt())
}
