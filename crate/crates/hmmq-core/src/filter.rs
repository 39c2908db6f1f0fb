//! Bayesian belief predictor, its parameter Jacobian, and the score.
//!
//! The belief `u` is the one-step-ahead predictive distribution over hidden
//! states given past extended observations. With `b` the emission vector,
//! `B = diag(b)`, `P` the realized state chain, and `s = b' u`, one step of
//! the predictor is
//!
//! ```text
//! u_next = f(y, u) = P' B u / s
//! ```
//!
//! The Jacobian `omega` (one length-`I` column per parameter, columns summing
//! to zero) follows the derivative of the same update,
//!
//! ```text
//! omega_next = Phi omega + df/dtheta,
//! Phi        = (P' B / s) (Id - u b' / s),
//! df/dtheta  = P' (Id - B u e' / s) (dB u) / s + (dP' B u) / s,
//! ```
//!
//! and the per-step log-likelihood `log(b' u)` has gradient
//!
//! ```text
//! S_l = (b' omega_l) / s + (db_l ' u) / s.
//! ```
//!
//! When `s` underflows, `b` and its gradient are rescaled by the largest
//! emission entry before the update; the scale cancels in `f`, `Phi`,
//! `df/dtheta`, and `S`, and the log-likelihood adds the log of the scale
//! back, so the guard never changes any returned value.

use alloc::vec;
use alloc::vec::Vec;

use crate::pomdp::{BehaviorPolicy, ExtendedObs};
use crate::theta::{emission, transition_grad, RealizedParams, ThetaParams};
use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use crate::math::F64Ext;

/// Belief total mass below which the emission vector is renormalized.
const GUARD_MIN: f64 = 1e-300;

/// Predictive belief over hidden states plus its Jacobian with respect to
/// the parameter vector.
///
/// The Jacobian is stored column-major: column `l` occupies
/// `jacobian[l * I .. (l + 1) * I]`. Every column lies in the tangent space
/// of the simplex (entries summing to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    belief: Vec<f64>,
    jacobian: Vec<f64>,
    num_states: usize,
}

impl FilterState {
    /// Uniform belief with an all-zero Jacobian, the canonical start.
    pub fn new_uniform(num_states: usize, param_count: usize) -> Self {
        Self {
            belief: vec![1.0 / num_states as f64; num_states],
            jacobian: vec![0.0; num_states * param_count],
            num_states,
        }
    }

    /// Rebuilds a state from raw parts, validating the simplex and
    /// tangent-space invariants.
    pub fn from_parts(belief: Vec<f64>, jacobian: Vec<f64>) -> Result<Self> {
        let num_states = belief.len();
        if num_states == 0 || jacobian.len() % num_states != 0 {
            return Err(Error::InvalidInput("jacobian length must be a multiple of the belief length".into()));
        }
        let sum: f64 = belief.iter().sum();
        if (sum - 1.0).abs() > 1e-10 || belief.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput(alloc::format!(
                "belief is not on the simplex (sum {sum})"
            )));
        }
        for l in 0..jacobian.len() / num_states {
            let col_sum: f64 = jacobian[l * num_states..][..num_states].iter().sum();
            if col_sum.abs() > 1e-8 {
                return Err(Error::InvalidInput(alloc::format!(
                    "jacobian column {l} sums to {col_sum}, expected 0"
                )));
            }
        }
        Ok(Self {
            belief,
            jacobian,
            num_states,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    /// Column-major `I x L` Jacobian.
    pub fn jacobian(&self) -> &[f64] {
        &self.jacobian
    }

    /// Column `l` of the Jacobian.
    pub fn jacobian_col(&self, l: usize) -> &[f64] {
        &self.jacobian[l * self.num_states..][..self.num_states]
    }

    pub fn param_count(&self) -> usize {
        self.jacobian.len() / self.num_states
    }
}

/// Emission vector rescaled against underflow.
///
/// `b` carries the factor `exp(-log_shift)` relative to the raw emission;
/// `total = b' u` in the rescaled units, so the true per-step likelihood is
/// `ln(total) + log_shift`.
pub(crate) struct GuardedEmission {
    pub(crate) b: Vec<f64>,
    pub(crate) total: f64,
    pub(crate) log_shift: f64,
}

pub(crate) fn guarded_emission(
    y: &ExtendedObs,
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
    belief: &[f64],
) -> Result<GuardedEmission> {
    let b = emission(y, theta, policy);
    let total: f64 = b.iter().zip(belief).map(|(bi, ui)| bi * ui).sum();
    if total > GUARD_MIN {
        return Ok(GuardedEmission {
            b,
            total,
            log_shift: 0.0,
        });
    }
    // Rebuild in log space and shift by the largest entry; equivalent to
    // renormalizing the raw vector by its maximum, but immune to the raw
    // values underflowing to zero outright.
    let logs = crate::theta::emission_log(y, theta, policy);
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::DegenerateLikelihood);
    }
    let b: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let total: f64 = b.iter().zip(belief).map(|(bi, ui)| bi * ui).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateLikelihood);
    }
    Ok(GuardedEmission {
        b,
        total,
        log_shift: shift,
    })
}

/// One predictor step `f(y, u)`; the result is on the simplex.
pub fn predict_belief(
    y: &ExtendedObs,
    state: &FilterState,
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
) -> Result<Vec<f64>> {
    predict_belief_with(y, state, theta, &theta.realize(), policy)
}

pub(crate) fn predict_belief_with(
    y: &ExtendedObs,
    state: &FilterState,
    theta: &ThetaParams,
    realized: &RealizedParams,
    policy: &BehaviorPolicy,
) -> Result<Vec<f64>> {
    let n = state.num_states();
    let lik = guarded_emission(y, theta, policy, state.belief())?;
    let mut weighted = vec![0.0; n];
    for i in 0..n {
        weighted[i] = lik.b[i] * state.belief()[i];
    }
    let mut next = vec![0.0; n];
    for i in 0..n {
        let w = weighted[i] / lik.total;
        if w == 0.0 {
            continue;
        }
        for j in 0..n {
            next[j] += realized.chain[i * n + j] * w;
        }
    }
    Ok(next)
}

/// One Jacobian step `Phi omega + df/dtheta`, column by column, returning the
/// full column-major `I x L` table.
pub fn update_jacobian(
    y: &ExtendedObs,
    state: &FilterState,
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
) -> Result<Vec<f64>> {
    update_jacobian_with(y, state, theta, &theta.realize(), policy)
}

pub(crate) fn update_jacobian_with(
    y: &ExtendedObs,
    state: &FilterState,
    theta: &ThetaParams,
    realized: &RealizedParams,
    policy: &BehaviorPolicy,
) -> Result<Vec<f64>> {
    let n = state.num_states();
    let len = theta.param_count();
    debug_assert_eq!(state.param_count(), len);
    let lik = guarded_emission(y, theta, policy, state.belief())?;
    let u = state.belief();
    let s = lik.total;

    // Emission gradient in the same rescaled units as b.
    let b_grad = crate::theta::emission_grad_given_b(y, theta, &lik.b);
    let chain_grad = transition_grad(theta);

    // weighted = B u, the unnormalized filtered mass.
    let weighted: Vec<f64> = (0..n).map(|i| lik.b[i] * u[i]).collect();

    let mut next = vec![0.0; n * len];
    let mut pre = vec![0.0; n];
    for l in 0..len {
        let omega_l = state.jacobian_col(l);
        let g_l = &b_grad[l * n..][..n];

        // Phi omega_l: P' B (omega_l - u (b' omega_l) / s) / s
        let b_dot_omega: f64 = lik.b.iter().zip(omega_l).map(|(bi, wi)| bi * wi).sum();
        // df/dtheta first piece: P' (g.u - (B u) (e' g.u) / s) / s
        let gu: Vec<f64> = (0..n).map(|i| g_l[i] * u[i]).collect();
        let gu_sum: f64 = gu.iter().sum();
        for i in 0..n {
            pre[i] = lik.b[i] * (omega_l[i] - u[i] * b_dot_omega / s) + gu[i]
                - weighted[i] * gu_sum / s;
        }
        let col = &mut next[l * n..][..n];
        for i in 0..n {
            let w = pre[i] / s;
            if w == 0.0 {
                continue;
            }
            for j in 0..n {
                col[j] += realized.chain[i * n + j] * w;
            }
        }
        // df/dtheta second piece: (dP' B u) / s, nonzero only for chain logits.
        let d_chain = &chain_grad[l * n * n..][..n * n];
        for i in 0..n {
            let w = weighted[i] / s;
            if w == 0.0 {
                continue;
            }
            for j in 0..n {
                col[j] += d_chain[i * n + j] * w;
            }
        }
    }
    Ok(next)
}

/// Per-step conditional log-likelihood `log(b' u)`.
pub fn step_log_likelihood(
    y: &ExtendedObs,
    state: &FilterState,
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
) -> Result<f64> {
    let lik = guarded_emission(y, theta, policy, state.belief())?;
    Ok(lik.total.ln() + lik.log_shift)
}

/// Gradient of the per-step log-likelihood with respect to every parameter,
/// accounting for the recursion's dependence through `(u, omega)`.
pub fn score(
    y: &ExtendedObs,
    state: &FilterState,
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
) -> Result<Vec<f64>> {
    let n = state.num_states();
    let len = theta.param_count();
    let lik = guarded_emission(y, theta, policy, state.belief())?;
    let b_grad = crate::theta::emission_grad_given_b(y, theta, &lik.b);
    let u = state.belief();
    let mut out = vec![0.0; len];
    for l in 0..len {
        let omega_l = state.jacobian_col(l);
        let b_dot_omega: f64 = lik.b.iter().zip(omega_l).map(|(bi, wi)| bi * wi).sum();
        let g_dot_u: f64 = b_grad[l * n..][..n].iter().zip(u).map(|(gi, ui)| gi * ui).sum();
        out[l] = (b_dot_omega + g_dot_u) / lik.total;
    }
    Ok(out)
}

/// Advances belief and Jacobian together, both evaluated at the same
/// parameter vector.
pub fn advance(
    y: &ExtendedObs,
    state: &FilterState,
    theta: &ThetaParams,
    policy: &BehaviorPolicy,
) -> Result<FilterState> {
    let realized = theta.realize();
    let belief = predict_belief_with(y, state, theta, &realized, policy)?;
    let jacobian = update_jacobian_with(y, state, theta, &realized, policy)?;
    Ok(FilterState {
        belief,
        jacobian,
        num_states: state.num_states(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, STREAM_ESTIMATOR_INIT};
    use crate::theta::InitRanges;
    use proptest::prelude::*;
    use rand::Rng;

    fn policy_2x2() -> BehaviorPolicy {
        BehaviorPolicy::new(2, 2, vec![0.6, 0.4, 0.3, 0.7]).unwrap()
    }

    fn random_theta(seed: u64, num_states: usize) -> ThetaParams {
        let mut rng = stream_rng(seed, STREAM_ESTIMATOR_INIT);
        ThetaParams::init_random(num_states, 2, 2, &InitRanges { logit_half_width: 0.5, r_half_width: 1.0, sigma: 2.0 }, &mut rng)
    }

    fn random_obs(seed: u64) -> ExtendedObs {
        let mut rng = stream_rng(seed, 77);
        ExtendedObs {
            obs: rng.random_range(0..2),
            action: rng.random_range(0..2),
            reward: rng.random_range(-2.0..2.0),
        }
    }

    /// Constant-emission parameters: uniform observation rows, equal reward
    /// means, so b is the same in every state.
    fn constant_emission_theta(num_states: usize) -> ThetaParams {
        let mut rng = stream_rng(4, STREAM_ESTIMATOR_INIT);
        let mut theta =
            ThetaParams::init_random(num_states, 2, 2, &InitRanges { logit_half_width: 0.5, r_half_width: 1.0, sigma: 2.0 }, &mut rng);
        for i in 0..num_states {
            for j in 0..2 {
                theta.set(theta.o_logit_index(i, j), 0.0);
            }
            for a in 0..2 {
                theta.set(theta.r_value_index(a, i), 0.5);
            }
        }
        theta
    }

    #[test]
    fn constant_emission_reduces_to_chain_transpose() {
        let theta = constant_emission_theta(3);
        let policy = policy_2x2();
        let mut state = FilterState::new_uniform(3, theta.param_count());
        state.belief = vec![0.5, 0.3, 0.2];
        let y = ExtendedObs {
            obs: 0,
            action: 1,
            reward: -0.7,
        };
        let next = predict_belief(&y, &state, &theta, &policy).unwrap();
        let chain = theta.realize().chain;
        for j in 0..3 {
            let expected: f64 = (0..3).map(|i| chain[i * 3 + j] * state.belief[i]).sum();
            assert!((next[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn near_identity_chain_with_dominant_emission_concentrates() {
        let mut theta = random_theta(5, 3);
        // Chain logits at the box corners: essentially the identity.
        for i in 0..3 {
            for j in 0..3 {
                theta.set(theta.p_logit_index(i, j), if i == j { 10.0 } else { -10.0 });
            }
        }
        // Observation 0 almost surely from state 1 only.
        for i in 0..3 {
            theta.set(theta.o_logit_index(i, 0), if i == 1 { 10.0 } else { -10.0 });
            theta.set(theta.o_logit_index(i, 1), if i == 1 { -10.0 } else { 10.0 });
        }
        let policy = policy_2x2();
        let state = FilterState::new_uniform(3, theta.param_count());
        let y = ExtendedObs {
            obs: 0,
            action: 0,
            reward: theta.r_values()[1],
        };
        let next = predict_belief(&y, &state, &theta, &policy).unwrap();
        assert!(next[1] > 0.99, "belief {next:?}");
    }

    #[test]
    fn single_state_log_likelihood_is_log_emission() {
        let theta = random_theta(6, 1);
        let policy = policy_2x2();
        let state = FilterState::new_uniform(1, theta.param_count());
        let y = random_obs(1);
        let ll = step_log_likelihood(&y, &state, &theta, &policy).unwrap();
        let b = crate::theta::emission(&y, &theta, &policy);
        assert!((ll - b[0].ln()).abs() < 1e-14);
    }

    #[test]
    fn constant_emission_log_likelihood_is_log_constant() {
        let theta = constant_emission_theta(4);
        let policy = policy_2x2();
        let state = FilterState::new_uniform(4, theta.param_count());
        let y = ExtendedObs {
            obs: 1,
            action: 0,
            reward: 0.1,
        };
        let ll = step_log_likelihood(&y, &state, &theta, &policy).unwrap();
        let b = crate::theta::emission(&y, &theta, &policy);
        assert!((ll - b[0].ln()).abs() < 1e-12);
    }

    #[test]
    fn jacobian_column_stays_zero_without_dependence() {
        // A reward value for an action other than the taken one influences
        // neither the emission nor the chain; from omega = 0 its column must
        // stay exactly zero.
        let theta = random_theta(7, 3);
        let policy = policy_2x2();
        let state = FilterState::new_uniform(3, theta.param_count());
        let y = ExtendedObs {
            obs: 0,
            action: 0,
            reward: 0.4,
        };
        let next = update_jacobian(&y, &state, &theta, &policy).unwrap();
        let l = theta.r_value_index(1, 0);
        assert!(next[l * 3..(l + 1) * 3].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jacobian_inhomogeneous_term_matches_finite_differences() {
        // With omega = 0 the update equals df/dtheta; compare against a
        // central difference of one predictor step in each parameter.
        let policy = policy_2x2();
        for seed in 0..20u64 {
            let theta = random_theta(seed, 3);
            let mut state = FilterState::new_uniform(3, theta.param_count());
            let mut rng = stream_rng(seed + 500, 3);
            state.belief = random_simplex(&mut rng, 3);
            let y = random_obs(seed + 900);
            let dfdtheta = update_jacobian(&y, &state, &theta, &policy).unwrap();
            for l in 0..theta.param_count() {
                let mut plus = theta.clone();
                plus.set(l, plus.get(l) + 1e-6);
                let mut minus = theta.clone();
                minus.set(l, minus.get(l) - 1e-6);
                let up = predict_belief(&y, &state, &plus, &policy).unwrap();
                let dn = predict_belief(&y, &state, &minus, &policy).unwrap();
                for i in 0..3 {
                    let fd = (up[i] - dn[i]) / 2e-6;
                    let an = dfdtheta[l * 3 + i];
                    assert!(
                        (an - fd).abs() <= 1e-8 + 1e-5 * an.abs().max(fd.abs()),
                        "seed {seed} param {l} state {i}: {an} vs {fd}"
                    );
                }
            }
        }
    }

    fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = v.iter().sum();
        for x in v.iter_mut() {
            *x /= sum;
        }
        v
    }

    #[test]
    fn score_zero_when_nothing_depends_on_parameter() {
        let theta = random_theta(11, 3);
        let policy = policy_2x2();
        let state = FilterState::new_uniform(3, theta.param_count());
        let y = ExtendedObs {
            obs: 1,
            action: 1,
            reward: -0.2,
        };
        let s = score(&y, &state, &theta, &policy).unwrap();
        // Chain logits: no omega yet, emission independent.
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s[theta.p_logit_index(i, j)], 0.0);
            }
        }
        // Reward values of the untaken action.
        for i in 0..3 {
            assert_eq!(s[theta.r_value_index(0, i)], 0.0);
        }
    }

    #[test]
    fn single_state_score_is_emission_log_gradient() {
        let theta = random_theta(12, 1);
        let policy = policy_2x2();
        let state = FilterState::new_uniform(1, theta.param_count());
        let y = random_obs(13);
        let s = score(&y, &state, &theta, &policy).unwrap();
        let b = crate::theta::emission(&y, &theta, &policy);
        let g = crate::theta::emission_grad(&y, &theta, &policy);
        for l in 0..theta.param_count() {
            assert!((s[l] - g[l] / b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn guard_rescues_underflowing_emissions() {
        // Push the reward residual far enough that the Gaussian underflows
        // for every state; the guard must keep the update finite and the
        // log-likelihood must come back through the scale correction.
        let mut theta = random_theta(14, 3);
        theta.set(theta.sigma_index(), 0.5);
        for i in 0..3 {
            theta.set(theta.r_value_index(0, i), 0.01 * i as f64);
        }
        let policy = policy_2x2();
        let state = FilterState::new_uniform(3, theta.param_count());
        let y = ExtendedObs {
            obs: 0,
            action: 0,
            reward: 18.7,
        };
        let raw = crate::theta::emission(&y, &theta, &policy);
        let raw_total: f64 = raw.iter().map(|b| b / 3.0).sum();
        assert!(raw_total < 1e-300, "raw mass {raw_total} not in guard range");
        let next = predict_belief(&y, &state, &theta, &policy).unwrap();
        let sum: f64 = next.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        let ll = step_log_likelihood(&y, &state, &theta, &policy).unwrap();
        assert!(ll.is_finite() && ll < -500.0, "ll = {ll}");
        let omega = update_jacobian(&y, &state, &theta, &policy).unwrap();
        assert!(omega.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn guard_rescues_fully_underflowed_emissions() {
        // Residuals so large every raw density is exactly zero; the log-space
        // fallback must still produce a valid update and a finite(ly huge)
        // negative log-likelihood.
        let mut theta = random_theta(15, 3);
        theta.set(theta.sigma_index(), 0.1);
        for i in 0..3 {
            theta.set(theta.r_value_index(0, i), -900.0 + i as f64);
        }
        let policy = policy_2x2();
        let state = FilterState::new_uniform(3, theta.param_count());
        let y = ExtendedObs {
            obs: 0,
            action: 0,
            reward: 900.0,
        };
        let raw = crate::theta::emission(&y, &theta, &policy);
        assert!(raw.iter().all(|&b| b == 0.0), "expected total raw underflow");
        let next = predict_belief(&y, &state, &theta, &policy).unwrap();
        let sum: f64 = next.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        // The concentrating state is the one with the smallest residual.
        assert!(next.iter().all(|&x| x.is_finite()));
        let ll = step_log_likelihood(&y, &state, &theta, &policy).unwrap();
        assert!(ll.is_finite() && ll < -1e5, "ll = {ll}");
        let score_vec = score(&y, &state, &theta, &policy).unwrap();
        assert!(score_vec.iter().all(|x| x.is_finite()));
        let omega = update_jacobian(&y, &state, &theta, &policy).unwrap();
        assert!(omega.iter().all(|x| x.is_finite()));
    }

    proptest! {
        #[test]
        fn predict_belief_preserves_simplex(seed in 0u64..5_000) {
            let mut rng = stream_rng(seed, 21);
            let theta = random_theta(seed, 4);
            let policy = policy_2x2();
            let mut state = FilterState::new_uniform(4, theta.param_count());
            state.belief = random_simplex(&mut rng, 4);
            let y = ExtendedObs {
                obs: rng.random_range(0..2),
                action: rng.random_range(0..2),
                reward: rng.random_range(-3.0..3.0),
            };
            let next = predict_belief(&y, &state, &theta, &policy).unwrap();
            let sum: f64 = next.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            prop_assert!(next.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn jacobian_columns_stay_in_tangent_space(seed in 0u64..2_000) {
            let mut rng = stream_rng(seed, 22);
            let theta = random_theta(seed, 3);
            let policy = policy_2x2();
            let len = theta.param_count();
            let mut state = FilterState::new_uniform(3, len);
            state.belief = random_simplex(&mut rng, 3);
            // Random tangent columns: zero-sum by construction.
            for l in 0..len {
                let a = rng.random_range(-1.0..1.0);
                let b = rng.random_range(-1.0..1.0);
                state.jacobian[l * 3] = a;
                state.jacobian[l * 3 + 1] = b;
                state.jacobian[l * 3 + 2] = -a - b;
            }
            let y = ExtendedObs {
                obs: rng.random_range(0..2),
                action: rng.random_range(0..2),
                reward: rng.random_range(-3.0..3.0),
            };
            let next = update_jacobian(&y, &state, &theta, &policy).unwrap();
            for l in 0..len {
                let col_sum: f64 = next[l * 3..(l + 1) * 3].iter().sum();
                prop_assert!(col_sum.abs() < 1e-8, "column {} sums to {}", l, col_sum);
            }
        }
    }
}
