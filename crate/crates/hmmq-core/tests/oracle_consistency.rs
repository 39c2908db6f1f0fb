//! Cross-module consistency against independent oracles: the exhaustive
//! path-sum forward recursion and perturb-and-rerun finite differences.

mod common;

use common::{direct_emission, path_sum_predictive, random_simplex, random_stochastic};
use hmmq_core::filter::{self, FilterState};
use hmmq_core::policy::{belief_step_with_action, FrozenModel};
use hmmq_core::pomdp::{BehaviorPolicy, ExtendedObs};
use hmmq_core::estim::QTable;
use hmmq_core::rng::stream_rng;
use hmmq_core::theta::{InitRanges, ThetaParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_policy(rng: &mut ChaCha8Rng, num_obs: usize, num_actions: usize) -> BehaviorPolicy {
    BehaviorPolicy::new(
        num_obs,
        num_actions,
        random_stochastic(rng, num_obs, num_actions),
    )
    .unwrap()
}

fn random_ys(rng: &mut ChaCha8Rng, steps: usize, num_obs: usize, num_actions: usize) -> Vec<ExtendedObs> {
    (0..steps)
        .map(|_| ExtendedObs {
            obs: rng.random_range(0..num_obs),
            action: rng.random_range(0..num_actions),
            reward: rng.random_range(-2.0..2.0),
        })
        .collect()
}

#[test]
fn filter_and_log_likelihood_match_path_sum_oracle() {
    for seed in 0..5u64 {
        let mut rng = stream_rng(seed, 200);
        let theta = ThetaParams::init_random(3, 2, 2, &InitRanges { logit_half_width: 0.5, r_half_width: 1.0, sigma: 2.0 }, &mut rng);
        let policy = random_policy(&mut rng, 2, 2);
        let ys = random_ys(&mut rng, 10, 2, 2);
        let realized = theta.realize();

        let mut state = FilterState::new_uniform(3, theta.param_count());
        let mut trans = Vec::new();
        let mut emits = Vec::new();
        for (k, y) in ys.iter().enumerate() {
            // Oracle emission from realized matrices, scalar arithmetic only.
            let b = direct_emission(
                &realized.obs,
                2,
                policy.prob(y.obs, y.action),
                &realized.reward,
                realized.sigma,
                3,
                y.obs,
                y.action,
                y.reward,
            );
            // Per-step log-likelihood against the oracle's current belief.
            let oracle_belief = if k == 0 {
                vec![1.0 / 3.0; 3]
            } else {
                path_sum_predictive(&trans, &emits, &[1.0 / 3.0; 3], 3)
            };
            let oracle_ll: f64 = b
                .iter()
                .zip(&oracle_belief)
                .map(|(bi, ui)| bi * ui)
                .sum::<f64>()
                .ln();
            let ll = filter::step_log_likelihood(y, &state, &theta, &policy).unwrap();
            assert!(
                (ll - oracle_ll).abs() < 1e-10,
                "seed {seed} step {k}: ll {ll} vs oracle {oracle_ll}"
            );

            trans.push(realized.chain.clone());
            emits.push(b);
            let next = filter::predict_belief(y, &state, &theta, &policy).unwrap();
            let oracle = path_sum_predictive(&trans, &emits, &[1.0 / 3.0; 3], 3);
            for i in 0..3 {
                assert!(
                    (next[i] - oracle[i]).abs() < 1e-10,
                    "seed {seed} step {k} state {i}: {} vs {}",
                    next[i],
                    oracle[i]
                );
            }
            state = filter::advance(y, &state, &theta, &policy).unwrap();
        }
    }
}

#[test]
fn action_conditioned_filter_matches_path_sum_oracle() {
    const N: usize = 3;
    for seed in 0..5u64 {
        let mut rng = stream_rng(seed, 201);
        let n = N;
        let transition: Vec<f64> = (0..2)
            .flat_map(|_| random_stochastic(&mut rng, n, n))
            .collect();
        let obs_matrix = random_stochastic(&mut rng, n, 2);
        let reward_table: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let frozen = FrozenModel::from_parts(
            n,
            2,
            2,
            transition.clone(),
            obs_matrix.clone(),
            reward_table.clone(),
            1.0,
            QTable::zeros(n, 2, -1.0, 1.0),
        )
        .unwrap();
        let ys = random_ys(&mut rng, 10, 2, 2);

        let mut belief = vec![1.0 / n as f64; n];
        let mut trans = Vec::new();
        let mut emits = Vec::new();
        for (k, y) in ys.iter().enumerate() {
            // Frozen emission has no behavior-policy factor (mu = 1).
            emits.push(direct_emission(
                &obs_matrix,
                2,
                1.0,
                &reward_table,
                1.0,
                n,
                y.obs,
                y.action,
                y.reward,
            ));
            trans.push(transition[y.action * n * n..(y.action + 1) * n * n].to_vec());
            belief = belief_step_with_action(&belief, y, &frozen).unwrap();
            let oracle = path_sum_predictive(&trans, &emits, &[1.0 / N as f64; N], n);
            for i in 0..n {
                assert!(
                    (belief[i] - oracle[i]).abs() < 1e-10,
                    "seed {seed} step {k} state {i}: {} vs {}",
                    belief[i],
                    oracle[i]
                );
            }
        }
    }
}

#[test]
fn jacobian_matches_belief_perturbation_after_50_steps() {
    for seed in 0..3u64 {
        let mut rng = stream_rng(seed, 202);
        let theta = ThetaParams::init_random(3, 2, 2, &InitRanges { logit_half_width: 0.5, r_half_width: 1.0, sigma: 2.0 }, &mut rng);
        let policy = random_policy(&mut rng, 2, 2);
        let ys = random_ys(&mut rng, 50, 2, 2);

        let run_belief = |t: &ThetaParams| {
            let mut state = FilterState::new_uniform(3, t.param_count());
            for y in &ys {
                state = filter::advance(y, &state, t, &policy).unwrap();
            }
            state
        };
        let state = run_belief(&theta);
        let h = 1e-6;
        for l in 0..theta.param_count() {
            let mut plus = theta.clone();
            plus.set(l, plus.get(l) + h);
            let mut minus = theta.clone();
            minus.set(l, minus.get(l) - h);
            let up = run_belief(&plus);
            let dn = run_belief(&minus);
            for i in 0..3 {
                let fd = (up.belief()[i] - dn.belief()[i]) / (2.0 * h);
                let an = state.jacobian_col(l)[i];
                assert!(
                    (an - fd).abs() <= 1e-7 + 1e-4 * an.abs().max(fd.abs()),
                    "seed {seed} param {l} state {i}: jacobian {an} vs fd {fd}"
                );
            }
        }
    }
}

#[test]
fn summed_score_matches_log_likelihood_perturbation_over_30_steps() {
    for seed in 0..5u64 {
        let mut rng = stream_rng(seed, 203);
        let theta = ThetaParams::init_random(3, 2, 2, &InitRanges { logit_half_width: 0.5, r_half_width: 1.0, sigma: 2.0 }, &mut rng);
        let policy = random_policy(&mut rng, 2, 2);
        let ys = random_ys(&mut rng, 30, 2, 2);

        let total_ll = |t: &ThetaParams| {
            let mut state = FilterState::new_uniform(3, t.param_count());
            let mut sum = 0.0;
            for y in &ys {
                sum += filter::step_log_likelihood(y, &state, t, &policy).unwrap();
                state = filter::advance(y, &state, t, &policy).unwrap();
            }
            sum
        };

        let mut score_sum = vec![0.0; theta.param_count()];
        let mut state = FilterState::new_uniform(3, theta.param_count());
        for y in &ys {
            let s = filter::score(y, &state, &theta, &policy).unwrap();
            for (acc, si) in score_sum.iter_mut().zip(&s) {
                *acc += si;
            }
            state = filter::advance(y, &state, &theta, &policy).unwrap();
        }

        let h = 1e-6;
        for l in 0..theta.param_count() {
            let mut plus = theta.clone();
            plus.set(l, plus.get(l) + h);
            let mut minus = theta.clone();
            minus.set(l, minus.get(l) - h);
            let fd = (total_ll(&plus) - total_ll(&minus)) / (2.0 * h);
            let an = score_sum[l];
            assert!(
                (an - fd).abs() <= 1e-6 + 1e-4 * an.abs().max(fd.abs()),
                "seed {seed} param {l}: score sum {an} vs fd {fd}"
            );
        }
    }
}

#[test]
fn filter_state_with_random_start_matches_oracle_from_same_start() {
    // The oracle accepts any initial distribution, exercising the filter
    // from off-uniform starts as well.
    let mut rng = stream_rng(9, 204);
    let theta = ThetaParams::init_random(4, 2, 2, &InitRanges { logit_half_width: 0.5, r_half_width: 1.0, sigma: 2.0 }, &mut rng);
    let policy = random_policy(&mut rng, 2, 2);
    let ys = random_ys(&mut rng, 8, 2, 2);
    let u0 = random_simplex(&mut rng, 4);
    let realized = theta.realize();

    let mut state = FilterState::from_parts(u0.clone(), vec![0.0; 4 * theta.param_count()]).unwrap();
    let mut trans = Vec::new();
    let mut emits = Vec::new();
    for y in &ys {
        emits.push(direct_emission(
            &realized.obs,
            2,
            policy.prob(y.obs, y.action),
            &realized.reward,
            realized.sigma,
            4,
            y.obs,
            y.action,
            y.reward,
        ));
        trans.push(realized.chain.clone());
        state = filter::advance(y, &state, &theta, &policy).unwrap();
    }
    let oracle = path_sum_predictive(&trans, &emits, &u0, 4);
    for i in 0..4 {
        assert!((state.belief()[i] - oracle[i]).abs() < 1e-10);
    }
}
