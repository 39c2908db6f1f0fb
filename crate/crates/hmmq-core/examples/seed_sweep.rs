//! Multi-seed training sweep on the built-in benchmark, printing the
//! recovery metrics the evaluation protocol cares about.
//!
//! ```text
//! cargo run --release -p hmmq-core --example seed_sweep [steps] [sigma0] [r_width] [sigma_hi] [seeds]
//! ```

use hmmq_core::baseline::{
    best_permutation_match, best_permutation_match_tensor, value_iteration, BaselineLearners,
};
use hmmq_core::estim::{EstimatorSession, SessionConfig};
use hmmq_core::policy::{evaluate_policy, EvalPolicy, FrozenModel};
use hmmq_core::pomdp::sample_step;
use hmmq_core::presets;
use hmmq_core::rng::{eval_stream_rng, stream_rng, STREAM_ENVIRONMENT, STREAM_ESTIMATOR_INIT};

#[derive(Debug)]
struct SeedReport {
    seed: u64,
    ll_head: f64,
    ll_late: f64,
    sigma: f64,
    o_dev: f64,
    q_dev: f64,
    q_sup_full: f64,
    t_dev: f64,
    reward_full: f64,
    reward_hmm: f64,
    reward_partial: f64,
}

fn run_seed(seed: u64, steps: u64, sigma0: f64, r_width: f64, sigma_hi: f64) -> SeedReport {
    let model = presets::paper_s4_model();
    let policy = presets::paper_s4_policy();
    let mut config = SessionConfig::new(4, 2, 2, model.discount());
    config.schedule = presets::paper_s4_schedule();
    config.init.sigma = sigma0;
    config.init.r_half_width = r_width;
    config.bounds.sigma_hi = sigma_hi;

    let mut init_rng = stream_rng(seed, STREAM_ESTIMATOR_INIT);
    let mut env_rng = stream_rng(seed, STREAM_ENVIRONMENT);
    let mut session = EstimatorSession::new(config, policy.clone(), &mut init_rng).unwrap();
    let mut baselines = BaselineLearners::new(4, 2, 2, 1e3, model.discount());

    let mut s = model.sample_uniform_state(&mut env_rng);
    let (mut ll_head, mut ll_late) = (0.0, 0.0);
    let head_window = 10_000.min(steps) as f64;
    let late_lo = steps / 2;
    let late_hi = (steps / 2 + 50_000).min(steps);
    for n in 1..=steps {
        let (y, s_next) = sample_step(&model, &policy, s, &mut env_rng).unwrap();
        let eps = session.config().schedule.step_size(n);
        baselines.observe_step(s, y.obs, y.action, y.reward, s_next, eps, model.discount());
        let rec = session.step(&y).unwrap();
        if n <= 10_000 {
            ll_head += rec.log_likelihood / head_window;
        }
        if n > late_lo && n <= late_hi {
            ll_late += rec.log_likelihood / (late_hi - late_lo) as f64;
        }
        s = s_next;
    }

    let realized = session.theta().realize();
    let (_, o_dev) = best_permutation_match(&realized.obs, model.obs_matrix(), 4, 2).unwrap();
    let (_, q_dev) = best_permutation_match(
        session.q_table().values(),
        baselines.q_full().values(),
        4,
        2,
    )
    .unwrap();
    let oracle = value_iteration(&model, 1e-9);
    let q_sup_full = (0..4)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| (baselines.q_full().get(s, a) - oracle.get(s, a)).abs())
        .fold(0.0f64, f64::max);
    let (cond, _) = session.joint_table().normalized();
    let (_, t_dev) = best_permutation_match_tensor(&cond, model.transition_tensor(), 4, 2).unwrap();

    let frozen = FrozenModel::from_session(&session);
    let eval = |p: EvalPolicy<'_>, tag: u64| {
        let mut rng = eval_stream_rng(seed, tag);
        evaluate_policy(&model, p, 20, 200, &mut rng, None)
            .unwrap()
            .mean_reward
    };
    SeedReport {
        seed,
        ll_head,
        ll_late,
        sigma: session.theta().sigma_param(),
        o_dev,
        q_dev,
        q_sup_full,
        t_dev,
        reward_full: eval(EvalPolicy::StateGreedy(baselines.q_full()), 1),
        reward_hmm: eval(EvalPolicy::BeliefGreedy(&frozen), 0),
        reward_partial: eval(EvalPolicy::ObsGreedy(baselines.q_partial()), 2),
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(200_000);
    let sigma0: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(hmmq_core::theta::InitRanges::default().sigma);
    let r_width: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(hmmq_core::theta::InitRanges::default().r_half_width);
    let sigma_hi: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(hmmq_core::theta::HBounds::default().sigma_hi);
    let seeds: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(10);

    let start = std::time::Instant::now();
    let reports: Vec<SeedReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..seeds)
            .map(|seed| scope.spawn(move || run_seed(seed, steps, sigma0, r_width, sigma_hi)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    println!(
        "steps={steps} sigma0={sigma0} r_width={r_width} sigma_hi={sigma_hi}  ({:.1?})",
        start.elapsed()
    );
    println!("seed  ll0->ll1        sigma   o_dev   q_dev  q_sup   t_dev   full/hmm/partial");
    let mut pass = [0u32; 6];
    for r in &reports {
        println!(
            "{:>4}  {:6.3}->{:6.3} {:7.3} {:7.3} {:7.1} {:6.2} {:7.3}   {:6.2}/{:6.2}/{:6.2}",
            r.seed,
            r.ll_head,
            r.ll_late,
            r.sigma,
            r.o_dev,
            r.q_dev,
            r.q_sup_full,
            r.t_dev,
            r.reward_full,
            r.reward_hmm,
            r.reward_partial
        );
        pass[0] += (r.ll_late > r.ll_head) as u32;
        pass[1] += (0.8..=1.3).contains(&r.sigma) as u32;
        pass[2] += (r.q_dev <= 14.0 && r.q_sup_full <= 12.0) as u32;
        pass[3] += (r.o_dev <= 0.1) as u32;
        pass[4] += (r.reward_full >= r.reward_hmm && r.reward_hmm > r.reward_partial) as u32;
        pass[5] += (r.t_dev <= 0.15) as u32;
    }
    println!(
        "pass counts / {seeds}: ascent={} sigma={} q={} o={} ordering={} t={}",
        pass[0], pass[1], pass[2], pass[3], pass[4], pass[5]
    );
}
