//! Training and evaluation runs.
//!
//! One training thread drives the environment, the estimator session, and
//! the two baseline learners over the identical trajectory. Metrics rows go
//! out every `log_interval` steps; at every `eval_interval` steps the model
//! is frozen, the three policy classes are evaluated on fresh tagged
//! streams, and a checkpoint is written. Wall-clock timing goes to a
//! sidecar so metrics and checkpoints stay byte-identical per seed.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hmmq_core::baseline::BaselineLearners;
use hmmq_core::estim::EstimatorSession;
use hmmq_core::policy::{evaluate_policy, EvalPolicy, FrozenModel};
use hmmq_core::pomdp::sample_step;
use hmmq_core::rng::{eval_stream_rng, stream_rng, STREAM_ENVIRONMENT, STREAM_ESTIMATOR_INIT};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::metrics::{EvalRewards, MetricsRow, MetricsWriter};
use crate::{Error, Result};

/// Moving-average window for the logged per-step log-likelihood.
const LOGLIK_WINDOW: usize = 1000;

/// What a finished training run left on disk.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub final_step: u64,
    pub final_sigma: f64,
    pub guard_events: u64,
}

pub fn metrics_path(out_dir: &Path) -> PathBuf {
    out_dir.join("metrics.csv")
}

pub fn final_checkpoint_path(out_dir: &Path) -> PathBuf {
    out_dir.join("checkpoint_final.txt")
}

fn step_checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("checkpoint_{step}.txt"))
}

/// Trains for the configured number of steps, logging and checkpointing.
pub fn run_train(config: &RunConfig) -> Result<TrainOutcome> {
    std::fs::create_dir_all(&config.out_dir).map_err(Error::io(&config.out_dir))?;
    let metrics_file = metrics_path(&config.out_dir);
    let mut metrics = MetricsWriter::create(&metrics_file)?;
    let timing_path = config.out_dir.join("timing.log");
    let mut timing = std::fs::File::create(&timing_path).map_err(Error::io(&timing_path))?;
    let started = Instant::now();

    let mut init_rng = stream_rng(config.seed, STREAM_ESTIMATOR_INIT);
    let mut env_rng = stream_rng(config.seed, STREAM_ENVIRONMENT);
    let mut session =
        EstimatorSession::new(config.session_config(), config.policy.clone(), &mut init_rng)?;
    let mut baselines = BaselineLearners::new(
        config.model.num_states(),
        config.model.num_obs(),
        config.model.num_actions(),
        config.bounds.reward_abs_bound(),
        config.model.discount(),
    );

    let mut state = match config.initial_state {
        Some(s0) => s0,
        None => config.model.sample_uniform_state(&mut env_rng),
    };
    let mut window: VecDeque<f64> = VecDeque::with_capacity(LOGLIK_WINDOW);
    let mut window_sum = 0.0;
    let mut guard_logged = 0u64;

    for n in 1..=config.steps {
        let (y, s_next) = sample_step(&config.model, &config.policy, state, &mut env_rng)?;
        let eps = config.schedule.step_size(n);
        baselines.observe_step(
            state,
            y.obs,
            y.action,
            y.reward,
            s_next,
            eps,
            config.model.discount(),
        );
        let record = session.step(&y)?;
        state = s_next;

        if window.len() == LOGLIK_WINDOW {
            window_sum -= window.pop_front().unwrap();
        }
        window.push_back(record.log_likelihood);
        window_sum += record.log_likelihood;

        if record.guard_tripped && session.guard_events() > guard_logged {
            guard_logged = session.guard_events();
            let line = format!("step={n} event=likelihood-underflow-guard\n");
            timing
                .write_all(line.as_bytes())
                .map_err(Error::io(&timing_path))?;
        }

        let eval_due = config.eval_interval > 0 && n % config.eval_interval == 0;
        let log_due = n % config.log_interval == 0;
        if !(eval_due || log_due || n == config.steps) {
            continue;
        }
        let loglik_ma = window_sum / window.len() as f64;
        let eval = if eval_due {
            let rewards = evaluate_all(config, &session, &baselines, n)?;
            Checkpoint::from_run(
                &session,
                &baselines,
                config.seed,
                state,
                env_rng.get_word_pos(),
                loglik_ma,
            )
            .save(&step_checkpoint_path(&config.out_dir, n))?;
            Some(rewards)
        } else {
            None
        };
        let row = MetricsRow {
            step: n,
            loglik_ma,
            sigma_theta: session.theta().sigma_param(),
            max_q_hmm: session.q_table().max_value(),
            max_q_full: baselines.q_full().max_value(),
            max_q_partial: baselines.q_partial().max_value(),
            eval,
            wall_clock_s: Some(started.elapsed().as_secs_f64()),
        };
        metrics.write_row(&row)?;
        let line = format!("step={n} wall_clock_s={:.6}\n", started.elapsed().as_secs_f64());
        timing
            .write_all(line.as_bytes())
            .map_err(Error::io(&timing_path))?;
    }

    let checkpoint_file = final_checkpoint_path(&config.out_dir);
    Checkpoint::from_run(
        &session,
        &baselines,
        config.seed,
        state,
        env_rng.get_word_pos(),
        window_sum / window.len().max(1) as f64,
    )
    .save(&checkpoint_file)?;
    Ok(TrainOutcome {
        metrics_path: metrics_file,
        checkpoint_path: checkpoint_file,
        final_step: session.step_count(),
        final_sigma: session.theta().sigma_param(),
        guard_events: session.guard_events(),
    })
}

/// Evaluates the three policy classes frozen at the session's current state.
///
/// Stream tags combine the checkpoint step and the policy index, so every
/// (seed, step, policy) triple gets its own reproducible stream.
fn evaluate_all(
    config: &RunConfig,
    session: &EstimatorSession,
    baselines: &BaselineLearners,
    step: u64,
) -> Result<EvalRewards> {
    let frozen = FrozenModel::from_session(session);
    let run = |policy: EvalPolicy<'_>, idx: u64| -> Result<f64> {
        let mut rng: ChaCha8Rng = eval_stream_rng(config.seed, step.wrapping_mul(4) + idx);
        Ok(evaluate_policy(
            &config.model,
            policy,
            config.eval_episodes,
            config.eval_steps,
            &mut rng,
            config.initial_state,
        )?
        .mean_reward)
    };
    Ok(EvalRewards {
        belief: run(EvalPolicy::BeliefGreedy(&frozen), 0)?,
        full: run(EvalPolicy::StateGreedy(baselines.q_full()), 1)?,
        partial: run(EvalPolicy::ObsGreedy(baselines.q_partial()), 2)?,
    })
}

/// Loads a checkpoint, evaluates the three policy classes, and appends one
/// metrics row. Returns the row.
pub fn run_eval(config: &RunConfig, checkpoint_path: &Path) -> Result<MetricsRow> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let (session, baselines) = checkpoint.restore(config)?;
    let rewards = evaluate_all(config, &session, &baselines, checkpoint.step)?;
    let row = MetricsRow {
        step: checkpoint.step,
        loglik_ma: checkpoint.loglik_ma,
        sigma_theta: session.theta().sigma_param(),
        max_q_hmm: session.q_table().max_value(),
        max_q_full: baselines.q_full().max_value(),
        max_q_partial: baselines.q_partial().max_value(),
        eval: Some(rewards),
        wall_clock_s: None,
    };
    Ok(row)
}
