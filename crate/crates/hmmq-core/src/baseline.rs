//! Reference learners and oracles for the numerical study.
//!
//! Classical tabular Q-learning under full state observation and under the
//! raw observation symbol, both consuming the same trajectory as the main
//! estimator; a value-iteration fixed point of the Bellman optimality
//! operator on the true model; and exhaustive state-relabeling search to
//! compare estimates that only identify the hidden states up to permutation.

use alloc::vec::Vec;

use crate::estim::QTable;
use crate::pomdp::PomdpModel;
use crate::{Error, Result};

/// Largest state count accepted by the exhaustive permutation search.
const MAX_PERMUTATION_STATES: usize = 8;

/// The two classical learners run in parallel with the main estimator.
///
/// The fully observing learner updates on `(s, a, r, s')` as the transition
/// happens. The partially observing learner keys its table by observation
/// symbol and needs the next symbol, which is only drawn on the following
/// step, so its update lags one step behind; each pending transition keeps
/// the step size of the step that produced it.
#[derive(Debug, Clone)]
pub struct BaselineLearners {
    q_full: QTable,
    q_partial: QTable,
    pending_partial: Option<PendingPartial>,
}

#[derive(Debug, Clone, Copy)]
struct PendingPartial {
    obs: usize,
    action: usize,
    reward: f64,
    epsilon: f64,
}

impl BaselineLearners {
    pub fn new(
        num_states: usize,
        num_obs: usize,
        num_actions: usize,
        reward_abs_bound: f64,
        discount: f64,
    ) -> Self {
        Self {
            q_full: QTable::with_reward_bound(num_states, num_actions, reward_abs_bound, discount),
            q_partial: QTable::with_reward_bound(num_obs, num_actions, reward_abs_bound, discount),
            pending_partial: None,
        }
    }

    pub fn q_full(&self) -> &QTable {
        &self.q_full
    }

    pub fn q_partial(&self) -> &QTable {
        &self.q_partial
    }

    /// Restores both tables (checkpoint load); the pending observation
    /// transition is restored separately via [`Self::restore_pending`].
    pub fn restore_tables(&mut self, full: Vec<f64>, partial: Vec<f64>) -> Result<()> {
        self.q_full.restore_values(full)?;
        self.q_partial.restore_values(partial)
    }

    /// Reinstates the lagged observation transition, if one was pending.
    pub fn restore_pending(&mut self, pending: Option<(usize, usize, f64, f64)>) {
        self.pending_partial = pending.map(|(obs, action, reward, epsilon)| PendingPartial {
            obs,
            action,
            reward,
            epsilon,
        });
    }

    /// The pending observation transition as `(o, a, r, eps)`, if any.
    pub fn pending(&self) -> Option<(usize, usize, f64, f64)> {
        self.pending_partial
            .map(|p| (p.obs, p.action, p.reward, p.epsilon))
    }

    /// Feeds one environment step to both learners.
    pub fn observe_step(
        &mut self,
        s: usize,
        obs: usize,
        action: usize,
        reward: f64,
        s_next: usize,
        epsilon: f64,
        discount: f64,
    ) {
        if let Some(p) = self.pending_partial.take() {
            self.q_partial
                .watkins_update(p.obs, p.action, p.reward, obs, p.epsilon, discount);
        }
        self.q_full
            .watkins_update(s, action, reward, s_next, epsilon, discount);
        self.pending_partial = Some(PendingPartial {
            obs,
            action,
            reward,
            epsilon,
        });
    }
}

/// Fixed point of the Bellman optimality operator on the true model,
/// iterated to a sup-norm residual below `tol`.
///
/// The discount below one makes each sweep a contraction, so the residual
/// shrinks at least geometrically and the loop terminates.
pub fn value_iteration(model: &PomdpModel, tol: f64) -> QTable {
    assert!(tol > 0.0);
    let n = model.num_states();
    let k = model.num_actions();
    let gamma = model.discount();
    let r_max = model
        .reward_table()
        .iter()
        .fold(0.0f64, |m, &r| m.max(r.abs()));
    let mut q = QTable::with_reward_bound(n, k, r_max, gamma);
    loop {
        let maxes: Vec<f64> = (0..n).map(|s| q.max_over_actions(s)).collect();
        let mut residual = 0.0f64;
        for s in 0..n {
            for a in 0..k {
                let mut value = model.reward_mean(a, s);
                for (s_next, &m) in maxes.iter().enumerate() {
                    value += gamma * model.transition_prob(a, s, s_next) * m;
                }
                residual = residual.max((value - q.get(s, a)).abs());
                q.set(s, a, value);
            }
        }
        if residual < tol {
            return q;
        }
    }
}

/// Exhaustive search over state relabelings of `a` minimizing the largest
/// absolute deviation from `b`.
///
/// Both tables are `rows x cols` row-major with one row per state. Returns
/// the permutation `perm` (row `s` of the relabeled table is row `perm[s]`
/// of `a`) and the minimized deviation; ties resolve to the
/// lexicographically smallest permutation. Refuses more than eight states.
pub fn best_permutation_match(
    a: &[f64],
    b: &[f64],
    rows: usize,
    cols: usize,
) -> Result<(Vec<usize>, f64)> {
    if a.len() != rows * cols || b.len() != rows * cols {
        return Err(Error::InvalidInput("tables must both be rows x cols".into()));
    }
    if rows > MAX_PERMUTATION_STATES {
        return Err(Error::TooManyStates(rows));
    }
    let mut best_perm = Vec::new();
    let mut best_dev = f64::INFINITY;
    let mut perm: Vec<usize> = (0..rows).collect();
    loop {
        let mut dev = 0.0f64;
        for s in 0..rows {
            for c in 0..cols {
                dev = dev.max((a[perm[s] * cols + c] - b[s * cols + c]).abs());
            }
        }
        // Lexicographic enumeration: the first permutation reaching a value
        // is the lexicographically smallest one, so strict improvement only.
        if dev < best_dev {
            best_dev = dev;
            best_perm = perm.clone();
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok((best_perm, best_dev))
}

/// Relabeling search for an `actions x states x states` conditional
/// transition tensor; the permutation applies to both source and
/// destination states.
pub fn best_permutation_match_tensor(
    a: &[f64],
    b: &[f64],
    states: usize,
    actions: usize,
) -> Result<(Vec<usize>, f64)> {
    let len = actions * states * states;
    if a.len() != len || b.len() != len {
        return Err(Error::InvalidInput("tensors must both be actions x states x states".into()));
    }
    if states > MAX_PERMUTATION_STATES {
        return Err(Error::TooManyStates(states));
    }
    let mut best_perm = Vec::new();
    let mut best_dev = f64::INFINITY;
    let mut perm: Vec<usize> = (0..states).collect();
    loop {
        let mut dev = 0.0f64;
        for act in 0..actions {
            for s in 0..states {
                for s2 in 0..states {
                    let relabeled = a[(act * states + perm[s]) * states + perm[s2]];
                    dev = dev.max((relabeled - b[(act * states + s) * states + s2]).abs());
                }
            }
        }
        if dev < best_dev {
            best_dev = dev;
            best_perm = perm.clone();
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok((best_perm, best_dev))
}

/// Advances to the next permutation in lexicographic order; false once the
/// sequence wraps.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}
