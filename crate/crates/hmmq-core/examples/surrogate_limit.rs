//! Characterizes the theoretical limit of the belief-weighted estimators on
//! the benchmark: long-run plain averages of the pair estimates under the
//! true-parameter filter give the stationary surrogate transition and reward,
//! whose weighted Bellman fixed point is what the Q recursion converges to.
//!
//! ```text
//! cargo run --release -p hmmq-core --example surrogate_limit [steps]
//! ```

use hmmq_core::baseline::{best_permutation_match_tensor, value_iteration};
use hmmq_core::estim::{posterior_state, posterior_transition};
use hmmq_core::filter::{advance, FilterState};
use hmmq_core::pomdp::{derive_behavior_chain, sample_step};
use hmmq_core::presets;
use hmmq_core::rng::{stream_rng, STREAM_ENVIRONMENT};
use hmmq_core::theta::ThetaParams;

fn main() {
    let steps: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().unwrap())
        .unwrap_or(2_000_000);

    let model = presets::paper_s4_model();
    let policy = presets::paper_s4_policy();
    let theta_true = ThetaParams::new(
        4,
        2,
        2,
        derive_behavior_chain(&model, &policy)
            .iter()
            .map(|p| p.ln())
            .collect(),
        model.obs_matrix().iter().map(|p| p.ln()).collect(),
        model.reward_table().to_vec(),
        model.noise_sigma(),
    )
    .unwrap();

    let mut env_rng = stream_rng(7, STREAM_ENVIRONMENT);
    let mut state = FilterState::new_uniform(4, theta_true.param_count());
    let mut p_prev = vec![0.25; 4];
    let mut r_prev = 0.0;
    let mut a_prev = 0usize;
    // Plain arithmetic means, no Robbins-Monro forgetting.
    let mut pair_sum = vec![0.0; 2 * 16]; // [a][i][j]
    let mut pair_r_sum = vec![0.0; 2 * 4]; // [a][i]: sum of p(i) * r
    let mut pair_cnt = vec![0.0; 2];
    let mut s = model.sample_uniform_state(&mut env_rng);
    for _ in 0..steps {
        let (y, s_next) = sample_step(&model, &policy, s, &mut env_rng).unwrap();
        let posterior = posterior_state(&y, state.belief(), &theta_true, &policy).unwrap();
        let pair = posterior_transition(&p_prev, &posterior);
        for i in 0..4 {
            for j in 0..4 {
                pair_sum[a_prev * 16 + i * 4 + j] += pair[i * 4 + j];
            }
            pair_r_sum[a_prev * 4 + i] += p_prev[i] * r_prev;
        }
        pair_cnt[a_prev] += 1.0;
        state = advance(&y, &state, &theta_true, &policy).unwrap();
        p_prev = posterior;
        r_prev = y.reward;
        a_prev = y.action;
        s = s_next;
    }

    // Surrogate conditional transition and reward per (state, action).
    let mut cond = vec![0.0; 2 * 16]; // [a][i][j]
    let mut r_bar = vec![0.0; 2 * 4]; // [a][i]
    for a in 0..2 {
        for i in 0..4 {
            let row_mass: f64 = (0..4).map(|j| pair_sum[a * 16 + i * 4 + j]).sum();
            for j in 0..4 {
                cond[a * 16 + i * 4 + j] = pair_sum[a * 16 + i * 4 + j] / row_mass;
            }
            r_bar[a * 4 + i] = pair_r_sum[a * 4 + i] / row_mass;
        }
    }
    println!("surrogate conditionals vs true T:");
    for a in 0..2 {
        for i in 0..4 {
            print!("  a{a} s{i}: ");
            for j in 0..4 {
                print!("{:.3} ", cond[a * 16 + i * 4 + j]);
            }
            print!("  | true: ");
            for j in 0..4 {
                print!("{:.3} ", model.transition_prob(a, i, j));
            }
            println!("  r_bar {:+.2} vs {:+.1}", r_bar[a * 4 + i], model.reward_mean(a, i));
        }
    }
    let (perm, dev) =
        best_permutation_match_tensor(&cond, model.transition_tensor(), 4, 2).unwrap();
    println!("plain-mean surrogate T deviation = {dev:.3} (perm {perm:?})");

    // Weighted Bellman fixed point under the surrogate quantities.
    let gamma = model.discount();
    let mut q = vec![0.0f64; 8]; // [i][a]
    for _ in 0..20_000 {
        let maxes: Vec<f64> = (0..4)
            .map(|j| q[j * 2].max(q[j * 2 + 1]))
            .collect();
        let mut next = vec![0.0; 8];
        for i in 0..4 {
            for a in 0..2 {
                let mut v = 0.0;
                for j in 0..4 {
                    v += cond[a * 16 + i * 4 + j] * (r_bar[a * 4 + i] + gamma * maxes[j]);
                }
                next[i * 2 + a] = v;
            }
        }
        q = next;
    }
    let oracle = value_iteration(&model, 1e-9);
    println!("surrogate fixed point vs oracle:");
    let mut sup = 0.0f64;
    for i in 0..4 {
        for a in 0..2 {
            let o = oracle.get(i, a);
            sup = sup.max((q[i * 2 + a] - o).abs());
            println!("  Q({i},{a}) = {:8.2}  oracle {:8.2}", q[i * 2 + a], o);
        }
    }
    println!("sup deviation = {sup:.1}");
}
