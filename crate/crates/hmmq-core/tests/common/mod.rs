//! Shared test oracles, independent of the library's computation paths.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Predictive state distribution by exhaustive path enumeration.
///
/// `trans[k]` is the row-major transition matrix applied between steps `k`
/// and `k + 1`; `emits[k]` the per-state likelihood of the step-`k`
/// observation. Sums `u0(s_0) * prod_k emits[k][s_k] * trans[k][s_k, s_k+1]`
/// over every state path and normalizes the marginal of the final state.
pub fn path_sum_predictive(
    trans: &[Vec<f64>],
    emits: &[Vec<f64>],
    u0: &[f64],
    num_states: usize,
) -> Vec<f64> {
    assert_eq!(trans.len(), emits.len());
    let mut out = vec![0.0; num_states];
    for s0 in 0..num_states {
        walk(trans, emits, num_states, 0, s0, u0[s0], &mut out);
    }
    let total: f64 = out.iter().sum();
    out.iter().map(|x| x / total).collect()
}

fn walk(
    trans: &[Vec<f64>],
    emits: &[Vec<f64>],
    num_states: usize,
    step: usize,
    state: usize,
    weight: f64,
    out: &mut [f64],
) {
    if step == emits.len() {
        out[state] += weight;
        return;
    }
    let w = weight * emits[step][state];
    for next in 0..num_states {
        walk(
            trans,
            emits,
            num_states,
            step + 1,
            next,
            w * trans[step][state * num_states + next],
            out,
        );
    }
}

/// Per-state likelihood of `(o, a, r)` computed from realized matrices with
/// scalar arithmetic only.
pub fn direct_emission(
    obs_matrix: &[f64],
    num_obs: usize,
    mu: f64,
    reward_table: &[f64],
    sigma: f64,
    num_states: usize,
    o: usize,
    a: usize,
    r: f64,
) -> Vec<f64> {
    (0..num_states)
        .map(|i| {
            let mean = reward_table[a * num_states + i];
            let z = (r - mean) / sigma;
            obs_matrix[i * num_obs + o] * mu * (-0.5 * z * z).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        })
        .collect()
}

/// Random row-stochastic matrix with entries bounded away from zero.
pub fn random_stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &mut m[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = rng.random_range(0.05..1.0);
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    m
}

/// Random point on the simplex, entries bounded away from zero.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= sum;
    }
    v
}
