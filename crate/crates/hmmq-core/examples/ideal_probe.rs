//! Feeds the Q and joint-transition estimators with posteriors from the
//! true-parameter filter (no parameter learning), isolating how well those
//! two recursions do when identification is perfect.
//!
//! ```text
//! cargo run --release -p hmmq-core --example ideal_probe [steps] [seeds]
//! ```

use hmmq_core::baseline::{
    best_permutation_match, best_permutation_match_tensor, value_iteration, BaselineLearners,
};
use hmmq_core::estim::{
    posterior_state, posterior_transition, JointTransitionTable, QTable, TransitionUpdateMode,
};
use hmmq_core::filter::{advance, FilterState};
use hmmq_core::pomdp::{derive_behavior_chain, sample_step};
use hmmq_core::presets;
use hmmq_core::rng::{stream_rng, STREAM_ENVIRONMENT};
use hmmq_core::theta::ThetaParams;

fn main() {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(200_000);
    let seeds: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(5);

    let model = presets::paper_s4_model();
    let policy = presets::paper_s4_policy();
    let chain = derive_behavior_chain(&model, &policy);
    let theta_true = ThetaParams::new(
        4,
        2,
        2,
        chain.iter().map(|p| p.ln()).collect(),
        model.obs_matrix().iter().map(|p| p.ln()).collect(),
        model.reward_table().to_vec(),
        model.noise_sigma(),
    )
    .unwrap();
    let oracle = value_iteration(&model, 1e-9);
    let schedule = presets::paper_s4_schedule();

    for seed in 0..seeds {
        let mut env_rng = stream_rng(seed, STREAM_ENVIRONMENT);
        let mut state = FilterState::new_uniform(4, theta_true.param_count());
        let mut q = QTable::with_reward_bound(4, 2, 1e3, model.discount());
        let mut joint = JointTransitionTable::uniform(4, 2);
        let mut baselines = BaselineLearners::new(4, 2, 2, 1e3, model.discount());
        let mut p_prev = vec![0.25; 4];
        let mut r_prev = 0.0;
        let mut a_prev = 0usize;
        let mut sharp = 0.0;
        let mut s = model.sample_uniform_state(&mut env_rng);
        for n in 1..=steps {
            let (y, s_next) = sample_step(&model, &policy, s, &mut env_rng).unwrap();
            let eps = schedule.step_size(n);
            baselines.observe_step(s, y.obs, y.action, y.reward, s_next, eps, model.discount());
            let posterior = posterior_state(&y, state.belief(), &theta_true, &policy).unwrap();
            let pair = posterior_transition(&p_prev, &posterior);
            q.weighted_update(&pair, r_prev, a_prev, eps, model.discount());
            joint.update(&pair, a_prev, eps.min(1.0), TransitionUpdateMode::Averaging);
            state = advance(&y, &state, &theta_true, &policy).unwrap();
            if n > steps - 20_000 {
                sharp += posterior.iter().copied().fold(0.0f64, f64::max) / 20_000.0;
            }
            p_prev = posterior;
            r_prev = y.reward;
            a_prev = y.action;
            s = s_next;
        }
        let (_, q_dev) =
            best_permutation_match(q.values(), baselines.q_full().values(), 4, 2).unwrap();
        let q_sup_oracle = (0..4)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| (q.get(s, a) - oracle.get(s, a)).abs())
            .fold(0.0f64, f64::max);
        let (cond, _) = joint.normalized();
        let (_, t_dev) =
            best_permutation_match_tensor(&cond, model.transition_tensor(), 4, 2).unwrap();
        println!(
            "seed {seed}: sharpness={sharp:.3}  q_dev_vs_full={q_dev:.1}  q_sup_vs_oracle={q_sup_oracle:.1}  t_dev={t_dev:.3}"
        );
    }
}

