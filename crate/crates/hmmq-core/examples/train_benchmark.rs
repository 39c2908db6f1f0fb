//! Trains the estimator on the built-in benchmark and prints the learned
//! quantities next to their references.
//!
//! ```text
//! cargo run --release -p hmmq-core --example train_benchmark [seed] [steps]
//! ```

use hmmq_core::baseline::{
    best_permutation_match, best_permutation_match_tensor, value_iteration, BaselineLearners,
};
use hmmq_core::estim::{EstimatorSession, SessionConfig};
use hmmq_core::policy::{evaluate_policy, EvalPolicy, FrozenModel};
use hmmq_core::pomdp::sample_step;
use hmmq_core::presets;
use hmmq_core::rng::{eval_stream_rng, stream_rng, STREAM_ENVIRONMENT, STREAM_ESTIMATOR_INIT};

fn main() {
    let default_init = hmmq_core::theta::InitRanges::default();
    let default_bounds = hmmq_core::theta::HBounds::default();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(1);
    let steps: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(200_000);
    let sigma_init: f64 = args
        .next()
        .map(|s| s.parse().unwrap())
        .unwrap_or(default_init.sigma);
    let r_width: f64 = args
        .next()
        .map(|s| s.parse().unwrap())
        .unwrap_or(default_init.r_half_width);
    let sigma_hi: f64 = args
        .next()
        .map(|s| s.parse().unwrap())
        .unwrap_or(default_bounds.sigma_hi);

    let model = presets::paper_s4_model();
    let policy = presets::paper_s4_policy();
    let mut config = SessionConfig::new(4, 2, 2, model.discount());
    config.schedule = presets::paper_s4_schedule();
    config.init.sigma = sigma_init;
    config.init.r_half_width = r_width;
    config.bounds.sigma_hi = sigma_hi;

    let mut init_rng = stream_rng(seed, STREAM_ESTIMATOR_INIT);
    let mut env_rng = stream_rng(seed, STREAM_ENVIRONMENT);
    let mut session = EstimatorSession::new(config, policy.clone(), &mut init_rng).unwrap();
    let mut baselines = BaselineLearners::new(4, 2, 2, 1e3, model.discount());

    let start = std::time::Instant::now();
    let mut s = model.sample_uniform_state(&mut env_rng);
    let (mut ll_head, mut ll_mid, mut ll_tail) = (0.0, 0.0, 0.0);
    for n in 1..=steps {
        let (y, s_next) = sample_step(&model, &policy, s, &mut env_rng).unwrap();
        let eps = session.config().schedule.step_size(n);
        baselines.observe_step(s, y.obs, y.action, y.reward, s_next, eps, model.discount());
        let rec = session.step(&y).unwrap();
        if n <= 10_000 {
            ll_head += rec.log_likelihood / 10_000.0;
        }
        if n > steps / 4 && n <= steps / 2 {
            ll_mid += rec.log_likelihood / (steps / 4) as f64;
        }
        if n > steps - 10_000 {
            ll_tail += rec.log_likelihood / 10_000.0;
        }
        s = s_next;
    }
    println!("seed {seed}, {steps} steps in {:.1?}", start.elapsed());
    println!("mean ll  [0,1e4] = {ll_head:.4}   mid = {ll_mid:.4}   tail = {ll_tail:.4}");
    println!("sigma    = {:.4}", session.theta().sigma_param());

    let realized = session.theta().realize();
    println!("O_theta:");
    for i in 0..4 {
        println!("  [{:.3} {:.3}]", realized.obs[i * 2], realized.obs[i * 2 + 1]);
    }
    let (perm_o, dev_o) =
        best_permutation_match(&realized.obs, model.obs_matrix(), 4, 2).unwrap();
    println!("O permuted dev = {dev_o:.4} (perm {perm_o:?})");
    println!("R_theta:");
    for a in 0..2 {
        print!("  a{a}: [");
        for i in 0..4 {
            print!("{:7.2}", realized.reward[a * 4 + i]);
        }
        println!("]");
    }
    println!("P_theta (chain):");
    for i in 0..4 {
        print!("  [");
        for j in 0..4 {
            print!("{:.3} ", realized.chain[i * 4 + j]);
        }
        println!("]");
    }
    // Reference: mean per-step log-likelihood under the true parameters,
    // encoded exactly through log-probability logits.
    {
        use hmmq_core::filter::{advance, step_log_likelihood, FilterState};
        use hmmq_core::pomdp::derive_behavior_chain;
        use hmmq_core::theta::ThetaParams;
        let chain = derive_behavior_chain(&model, &policy);
        let p_logits: Vec<f64> = chain.iter().map(|p| p.ln()).collect();
        let o_logits: Vec<f64> = model.obs_matrix().iter().map(|p| p.ln()).collect();
        let theta_true = ThetaParams::new(
            4,
            2,
            2,
            p_logits,
            o_logits,
            model.reward_table().to_vec(),
            model.noise_sigma(),
        )
        .unwrap();
        let mut rng = stream_rng(seed + 101, STREAM_ENVIRONMENT);
        let mut s = model.sample_uniform_state(&mut rng);
        let mut state = FilterState::new_uniform(4, theta_true.param_count());
        let mut ll_sum = 0.0;
        let n_ref = 20_000;
        for _ in 0..n_ref {
            let (y, s_next) = sample_step(&model, &policy, s, &mut rng).unwrap();
            ll_sum += step_log_likelihood(&y, &state, &theta_true, &policy).unwrap();
            state = advance(&y, &state, &theta_true, &policy).unwrap();
            s = s_next;
        }
        println!("mean ll under true parameters = {:.4}", ll_sum / n_ref as f64);
    }
    // Posterior sharpness over the last stretch.
    {
        let mut rng = stream_rng(seed + 202, STREAM_ENVIRONMENT);
        let mut s = model.sample_uniform_state(&mut rng);
        let mut state = hmmq_core::filter::FilterState::new_uniform(4, session.theta().param_count());
        let mut sharp = 0.0;
        for _ in 0..5_000 {
            let (y, s_next) = sample_step(&model, &policy, s, &mut rng).unwrap();
            let p = hmmq_core::estim::posterior_state(&y, state.belief(), session.theta(), &policy)
                .unwrap();
            sharp += p.iter().copied().fold(0.0f64, f64::max) / 5_000.0;
            state = hmmq_core::filter::advance(&y, &state, session.theta(), &policy).unwrap();
            s = s_next;
        }
        println!("mean posterior sharpness under learned theta = {sharp:.3}");
    }

    let q_hmm = session.q_table();
    let q_full = baselines.q_full();
    let oracle = value_iteration(&model, 1e-9);
    let print_q = |name: &str, q: &hmmq_core::estim::QTable| {
        print!("{name}: ");
        for s in 0..q.num_rows() {
            print!("[");
            for a in 0..q.num_actions() {
                print!("{:7.1}", q.get(s, a));
            }
            print!("] ");
        }
        println!();
    };
    print_q("Q_hmm   ", q_hmm);
    print_q("Q_full  ", q_full);
    print_q("Q_partial", baselines.q_partial());
    print_q("VI oracle", &oracle);
    let (perm_q, dev_q) =
        best_permutation_match(q_hmm.values(), q_full.values(), 4, 2).unwrap();
    println!("perm(Q_hmm -> Q_full) = {perm_q:?}, max dev = {dev_q:.2}");
    let sup_full: f64 = (0..4)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| (q_full.get(s, a) - oracle.get(s, a)).abs())
        .fold(0.0, f64::max);
    println!("|Q_full - oracle|_sup = {sup_full:.2}");

    let (cond, unvisited) = session.joint_table().normalized();
    let (perm_t, dev_t) =
        best_permutation_match_tensor(&cond, model.transition_tensor(), 4, 2).unwrap();
    println!("T permuted dev = {dev_t:.4} (perm {perm_t:?}, unvisited {unvisited:?})");

    let frozen = FrozenModel::from_session(&session);
    let mut eval = |p: EvalPolicy<'_>, tag: u64| {
        let mut rng = eval_stream_rng(seed, tag);
        evaluate_policy(&model, p, 100, 500, &mut rng, None)
            .unwrap()
            .mean_reward
    };
    let belief_reward = eval(EvalPolicy::BeliefGreedy(&frozen), 0);
    let full_reward = eval(EvalPolicy::StateGreedy(q_full), 1);
    let partial_reward = eval(EvalPolicy::ObsGreedy(baselines.q_partial()), 2);
    println!(
        "eval mean reward: full = {full_reward:.3}  hmm = {belief_reward:.3}  partial = {partial_reward:.3}"
    );
    println!("guard events = {}", session.guard_events());
}
