//! Checkpoints: a flat `key = value` text format holding the full session
//! state, the parallel baseline tables, and the environment stream position,
//! so a run can be resumed or evaluated exactly.
//!
//! Floats are written with Rust's shortest-round-trip formatting, so every
//! value reloads bit-exactly. Vector-valued keys hold space-separated
//! entries in the owning type's documented layout:
//!
//! ```text
//! hmmq-checkpoint v1
//! step = 1000
//! seed = 1
//! num_states = 4
//! num_obs = 2
//! num_actions = 2
//! theta.p_logits = <I*I floats>
//! theta.o_logits = <I*J floats>
//! theta.r_values = <K*I floats>
//! theta.sigma = <float>
//! filter.belief = <I floats>
//! filter.jacobian = <I*L floats, column-major>
//! q.values = <I*K floats>
//! joint.values = <I*K*I floats>
//! posterior_prev = <I floats>
//! reward_prev = <float>
//! action_prev = <int>
//! guard_events = <int>
//! loglik_ma = <float>
//! baseline.q_full = <I*K floats>
//! baseline.q_partial = <J*K floats>
//! baseline.pending = none | <o> <a> <r> <eps>
//! env.state = <int>
//! env.word_pos = <u128>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use hmmq_core::baseline::BaselineLearners;
use hmmq_core::estim::{EstimatorSession, JointTransitionTable, QTable};
use hmmq_core::filter::FilterState;
use hmmq_core::theta::ThetaParams;

use crate::config::RunConfig;
use crate::{Error, Result};

const MAGIC: &str = "hmmq-checkpoint v1";

/// A full snapshot of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub seed: u64,
    pub num_states: usize,
    pub num_obs: usize,
    pub num_actions: usize,
    pub p_logits: Vec<f64>,
    pub o_logits: Vec<f64>,
    pub r_values: Vec<f64>,
    pub sigma: f64,
    pub belief: Vec<f64>,
    pub jacobian: Vec<f64>,
    pub q_values: Vec<f64>,
    pub joint_values: Vec<f64>,
    pub posterior_prev: Vec<f64>,
    pub reward_prev: f64,
    pub action_prev: usize,
    pub guard_events: u64,
    /// Trailing moving average of the per-step log-likelihood at save time.
    pub loglik_ma: f64,
    pub baseline_q_full: Vec<f64>,
    pub baseline_q_partial: Vec<f64>,
    pub baseline_pending: Option<(usize, usize, f64, f64)>,
    pub env_state: usize,
    pub env_word_pos: u128,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn from_run(
        session: &EstimatorSession,
        baselines: &BaselineLearners,
        seed: u64,
        env_state: usize,
        env_word_pos: u128,
        loglik_ma: f64,
    ) -> Self {
        let theta = session.theta();
        Self {
            step: session.step_count(),
            seed,
            num_states: theta.num_states(),
            num_obs: theta.num_obs(),
            num_actions: theta.num_actions(),
            p_logits: theta.p_logits().to_vec(),
            o_logits: theta.o_logits().to_vec(),
            r_values: theta.r_values().to_vec(),
            sigma: theta.sigma_param(),
            belief: session.filter().belief().to_vec(),
            jacobian: session.filter().jacobian().to_vec(),
            q_values: session.q_table().values().to_vec(),
            joint_values: session.joint_table().values().to_vec(),
            posterior_prev: session.posterior_prev().to_vec(),
            reward_prev: session.reward_prev(),
            action_prev: session.action_prev(),
            guard_events: session.guard_events(),
            loglik_ma,
            baseline_q_full: baselines.q_full().values().to_vec(),
            baseline_q_partial: baselines.q_partial().values().to_vec(),
            baseline_pending: baselines.pending(),
            env_state,
            env_word_pos,
        }
    }

    /// Rebuilds the session and baseline learners under the given config.
    pub fn restore(&self, config: &RunConfig) -> Result<(EstimatorSession, BaselineLearners)> {
        let theta = ThetaParams::new(
            self.num_states,
            self.num_obs,
            self.num_actions,
            self.p_logits.clone(),
            self.o_logits.clone(),
            self.r_values.clone(),
            self.sigma,
        )?;
        let filter = FilterState::from_parts(self.belief.clone(), self.jacobian.clone())?;
        let mut q = QTable::with_reward_bound(
            self.num_states,
            self.num_actions,
            config.bounds.reward_abs_bound(),
            config.model.discount(),
        );
        q.restore_values(self.q_values.clone())?;
        let mut joint = JointTransitionTable::uniform(self.num_states, self.num_actions);
        joint.restore_values(self.joint_values.clone())?;
        let session = EstimatorSession::from_parts(
            config.session_config(),
            config.policy.clone(),
            theta,
            filter,
            q,
            joint,
            self.posterior_prev.clone(),
            self.reward_prev,
            self.action_prev,
            self.step,
        )?;
        let mut baselines = BaselineLearners::new(
            self.num_states,
            self.num_obs,
            self.num_actions,
            config.bounds.reward_abs_bound(),
            config.model.discount(),
        );
        baselines.restore_tables(self.baseline_q_full.clone(), self.baseline_q_partial.clone())?;
        baselines.restore_pending(self.baseline_pending);
        Ok((session, baselines))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("step", self.step.to_string());
        kv("seed", self.seed.to_string());
        kv("num_states", self.num_states.to_string());
        kv("num_obs", self.num_obs.to_string());
        kv("num_actions", self.num_actions.to_string());
        kv("theta.p_logits", join_floats(&self.p_logits));
        kv("theta.o_logits", join_floats(&self.o_logits));
        kv("theta.r_values", join_floats(&self.r_values));
        kv("theta.sigma", format!("{}", self.sigma));
        kv("filter.belief", join_floats(&self.belief));
        kv("filter.jacobian", join_floats(&self.jacobian));
        kv("q.values", join_floats(&self.q_values));
        kv("joint.values", join_floats(&self.joint_values));
        kv("posterior_prev", join_floats(&self.posterior_prev));
        kv("reward_prev", format!("{}", self.reward_prev));
        kv("action_prev", self.action_prev.to_string());
        kv("guard_events", self.guard_events.to_string());
        kv("loglik_ma", format!("{}", self.loglik_ma));
        kv("baseline.q_full", join_floats(&self.baseline_q_full));
        kv("baseline.q_partial", join_floats(&self.baseline_q_partial));
        kv(
            "baseline.pending",
            match self.baseline_pending {
                None => "none".to_string(),
                Some((o, a, r, eps)) => format!("{o} {a} {r} {eps}"),
            },
        );
        kv("env.state", self.env_state.to_string());
        kv("env.word_pos", self.env_word_pos.to_string());
        std::fs::write(path, out).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line + 1,
            message,
        };
        match lines.next() {
            Some((_, MAGIC)) => {}
            Some((i, other)) => return Err(bad(i, format!("bad magic {other:?}"))),
            None => return Err(bad(0, "empty checkpoint".into())),
        }
        let mut map = std::collections::BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| bad(i, format!("expected `key = value`, got {line:?}")))?;
            map.insert(key.to_string(), (i, value.to_string()));
        }
        let mut take = |key: &str| -> Result<(usize, String)> {
            map.remove(key).ok_or_else(|| Error::Malformed {
                path: path.to_path_buf(),
                line: 0,
                message: format!("missing key {key}"),
            })
        };
        macro_rules! scalar {
            ($key:expr, $ty:ty) => {{
                let (line, value) = take($key)?;
                value
                    .parse::<$ty>()
                    .map_err(|e| bad(line, format!("bad {}: {e}", $key)))?
            }};
        }
        macro_rules! floats {
            ($key:expr) => {{
                let (line, value) = take($key)?;
                parse_floats(&value).map_err(|e| bad(line, format!("bad {}: {e}", $key)))?
            }};
        }
        let checkpoint = Checkpoint {
            step: scalar!("step", u64),
            seed: scalar!("seed", u64),
            num_states: scalar!("num_states", usize),
            num_obs: scalar!("num_obs", usize),
            num_actions: scalar!("num_actions", usize),
            p_logits: floats!("theta.p_logits"),
            o_logits: floats!("theta.o_logits"),
            r_values: floats!("theta.r_values"),
            sigma: scalar!("theta.sigma", f64),
            belief: floats!("filter.belief"),
            jacobian: floats!("filter.jacobian"),
            q_values: floats!("q.values"),
            joint_values: floats!("joint.values"),
            posterior_prev: floats!("posterior_prev"),
            reward_prev: scalar!("reward_prev", f64),
            action_prev: scalar!("action_prev", usize),
            guard_events: scalar!("guard_events", u64),
            loglik_ma: scalar!("loglik_ma", f64),
            baseline_q_full: floats!("baseline.q_full"),
            baseline_q_partial: floats!("baseline.q_partial"),
            baseline_pending: {
                let (line, value) = take("baseline.pending")?;
                if value == "none" {
                    None
                } else {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 4 {
                        return Err(bad(line, "pending needs `o a r eps`".into()));
                    }
                    Some((
                        parts[0].parse().map_err(|e| bad(line, format!("{e}")))?,
                        parts[1].parse().map_err(|e| bad(line, format!("{e}")))?,
                        parts[2].parse().map_err(|e| bad(line, format!("{e}")))?,
                        parts[3].parse().map_err(|e| bad(line, format!("{e}")))?,
                    ))
                }
            },
            env_state: scalar!("env.state", usize),
            env_word_pos: scalar!("env.word_pos", u128),
        };
        if let Some((key, (line, _))) = map.into_iter().next() {
            return Err(bad(line, format!("unknown key {key}")));
        }
        Ok(checkpoint)
    }
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_floats(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}
