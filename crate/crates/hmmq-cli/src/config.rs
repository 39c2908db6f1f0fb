//! Run configuration: a TOML document with either a built-in preset name or
//! explicit model matrices, plus optional schedule/bounds/init/run sections.
//!
//! The full schema, with defaults:
//!
//! ```toml
//! preset = "paper-s4"            # XOR an explicit [model] + [behavior]
//!
//! [model]                        # only without `preset`
//! num_states = 4
//! num_actions = 2
//! num_obs = 2
//! noise_sigma = 1.0
//! discount = 0.95
//! transition = [[[...]]]         # [action][state][next_state]
//! reward_mean = [[...]]          # [action][state]
//! obs = [[...]]                  # [state][observation]
//!
//! [behavior]
//! probs = [[...]]                # [observation][action]
//!
//! [schedule]
//! scale = 1.0                    # step size scale * n^-exponent
//! exponent = 0.4
//!
//! [bounds]                       # parameter box
//! logit_lo = -10.0
//! logit_hi = 10.0
//! sigma_lo = 0.1
//! sigma_hi = 5.0
//! r_lo = -1000.0
//! r_hi = 1000.0
//!
//! [init]
//! logit_half_width = 0.5
//! r_half_width = 0.0
//! sigma = 5.0
//!
//! [run]
//! steps = 200000
//! seed = 1
//! out_dir = "out"
//! log_interval = 100             # metrics row cadence
//! eval_interval = 1000           # 0 disables mid-run evaluation
//! eval_episodes = 100
//! eval_steps = 500
//! t_mode = "averaging"           # or "literal"
//! q_timing = "alg1"              # or "eq14"
//! # initial_state = 0            # omitted: drawn uniformly per run/episode
//! ```
//!
//! Every probability row is validated on load; unknown keys are rejected
//! with their path.

use std::path::{Path, PathBuf};

use hmmq_core::estim::{QTiming, SessionConfig, TransitionUpdateMode};
use hmmq_core::pomdp::{BehaviorPolicy, PomdpModel};
use hmmq_core::presets;
use hmmq_core::theta::{HBounds, InitRanges, StepSchedule};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A fully expanded and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: PomdpModel,
    pub policy: BehaviorPolicy,
    pub schedule: StepSchedule,
    pub bounds: HBounds,
    pub init: InitRanges,
    pub steps: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub log_interval: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub eval_steps: usize,
    pub t_mode: TransitionUpdateMode,
    pub q_timing: QTiming,
    pub initial_state: Option<usize>,
}

impl RunConfig {
    /// The estimator-session view of this configuration.
    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            num_states: self.model.num_states(),
            num_obs: self.model.num_obs(),
            num_actions: self.model.num_actions(),
            discount: self.model.discount(),
            schedule: self.schedule,
            bounds: self.bounds,
            init: self.init,
            t_mode: self.t_mode,
            q_timing: self.q_timing,
        }
    }

    /// Serializes the expanded configuration (preset replaced by explicit
    /// matrices) back into the document schema.
    pub fn to_document(&self) -> ConfigFile {
        let i = self.model.num_states();
        let k = self.model.num_actions();
        let j = self.model.num_obs();
        let transition = (0..k)
            .map(|a| {
                (0..i)
                    .map(|s| self.model.transition_row(a, s).to_vec())
                    .collect()
            })
            .collect();
        let reward_mean = (0..k)
            .map(|a| (0..i).map(|s| self.model.reward_mean(a, s)).collect())
            .collect();
        let obs = (0..i).map(|s| self.model.obs_row(s).to_vec()).collect();
        let probs = (0..j).map(|o| self.policy.row(o).to_vec()).collect();
        ConfigFile {
            preset: None,
            model: Some(ModelSection {
                num_states: i,
                num_actions: k,
                num_obs: j,
                noise_sigma: self.model.noise_sigma(),
                discount: self.model.discount(),
                transition,
                reward_mean,
                obs,
            }),
            behavior: Some(BehaviorSection { probs }),
            schedule: ScheduleSection {
                scale: self.schedule.scale,
                exponent: self.schedule.exponent,
            },
            bounds: BoundsSection {
                logit_lo: self.bounds.logit_lo,
                logit_hi: self.bounds.logit_hi,
                sigma_lo: self.bounds.sigma_lo,
                sigma_hi: self.bounds.sigma_hi,
                r_lo: self.bounds.r_lo,
                r_hi: self.bounds.r_hi,
            },
            init: InitSection {
                logit_half_width: self.init.logit_half_width,
                r_half_width: self.init.r_half_width,
                sigma: self.init.sigma,
            },
            run: RunSection {
                steps: self.steps,
                seed: self.seed,
                out_dir: self.out_dir.to_string_lossy().into_owned(),
                log_interval: self.log_interval,
                eval_interval: self.eval_interval,
                eval_episodes: self.eval_episodes,
                eval_steps: self.eval_steps,
                t_mode: match self.t_mode {
                    TransitionUpdateMode::Averaging => "averaging".into(),
                    TransitionUpdateMode::Literal => "literal".into(),
                },
                q_timing: match self.q_timing {
                    QTiming::Lagged => "alg1".into(),
                    QTiming::Immediate => "eq14".into(),
                },
                initial_state: self.initial_state,
            },
        }
    }

    /// Expanded TOML text of this configuration.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&self.to_document()).expect("config serializes")
    }
}

/// The raw document schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorSection>,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    pub noise_sigma: f64,
    pub discount: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward_mean: Vec<Vec<f64>>,
    pub obs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSection {
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub scale: f64,
    pub exponent: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = StepSchedule::default();
        Self {
            scale: s.scale,
            exponent: s.exponent,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub logit_lo: f64,
    pub logit_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let b = HBounds::default();
        Self {
            logit_lo: b.logit_lo,
            logit_hi: b.logit_hi,
            sigma_lo: b.sigma_lo,
            sigma_hi: b.sigma_hi,
            r_lo: b.r_lo,
            r_hi: b.r_hi,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    pub logit_half_width: f64,
    pub r_half_width: f64,
    pub sigma: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        let i = InitRanges::default();
        Self {
            logit_half_width: i.logit_half_width,
            r_half_width: i.r_half_width,
            sigma: i.sigma,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub steps: u64,
    pub seed: u64,
    pub out_dir: String,
    pub log_interval: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub eval_steps: usize,
    pub t_mode: String,
    pub q_timing: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            steps: 200_000,
            seed: 1,
            out_dir: "out".into(),
            log_interval: 100,
            eval_interval: 1000,
            eval_episodes: 100,
            eval_steps: 500,
            t_mode: "averaging".into(),
            q_timing: "alg1".into(),
            initial_state: None,
        }
    }
}

/// Loads, expands, and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    expand_config(file)
}

/// The built-in preset as a raw document.
pub fn preset_document(name: &str) -> Result<ConfigFile> {
    if name != "paper-s4" {
        return Err(Error::Config(format!(
            "unknown preset {name:?} (available: paper-s4)"
        )));
    }
    Ok(ConfigFile {
        preset: Some(name.to_string()),
        model: None,
        behavior: None,
        schedule: ScheduleSection::default(),
        bounds: BoundsSection::default(),
        init: InitSection::default(),
        run: RunSection::default(),
    })
}

/// Expands a raw document into a validated configuration.
pub fn expand_config(file: ConfigFile) -> Result<RunConfig> {
    let (model, policy) = match (&file.preset, &file.model, &file.behavior) {
        (Some(name), None, None) => {
            if name != "paper-s4" {
                return Err(Error::Config(format!(
                    "unknown preset {name:?} (available: paper-s4)"
                )));
            }
            (presets::paper_s4_model(), presets::paper_s4_policy())
        }
        (None, Some(m), Some(b)) => {
            let model = PomdpModel::new(
                m.num_states,
                m.num_actions,
                m.num_obs,
                flatten3(&m.transition),
                flatten2(&m.reward_mean),
                flatten2(&m.obs),
                m.noise_sigma,
                m.discount,
            )
            .map_err(|e| Error::Config(format!("model: {e}")))?;
            let policy = BehaviorPolicy::new(m.num_obs, m.num_actions, flatten2(&b.probs))
                .map_err(|e| Error::Config(format!("behavior: {e}")))?;
            (model, policy)
        }
        (Some(_), _, _) => {
            return Err(Error::Config(
                "preset and explicit [model]/[behavior] are mutually exclusive".into(),
            ))
        }
        _ => {
            return Err(Error::Config(
                "either `preset` or both [model] and [behavior] are required".into(),
            ))
        }
    };

    if file.run.steps == 0 {
        return Err(Error::Config("run.steps must be at least 1".into()));
    }
    if file.run.log_interval == 0 {
        return Err(Error::Config("run.log_interval must be at least 1".into()));
    }
    if file.run.eval_episodes == 0 || file.run.eval_steps == 0 {
        return Err(Error::Config("run.eval_episodes and run.eval_steps must be at least 1".into()));
    }
    if let Some(s0) = file.run.initial_state {
        if s0 >= model.num_states() {
            return Err(Error::Config(format!(
                "run.initial_state = {s0} out of range for {} states",
                model.num_states()
            )));
        }
    }
    let t_mode = match file.run.t_mode.as_str() {
        "averaging" => TransitionUpdateMode::Averaging,
        "literal" => TransitionUpdateMode::Literal,
        other => {
            return Err(Error::Config(format!(
                "run.t_mode must be \"averaging\" or \"literal\", got {other:?}"
            )))
        }
    };
    let q_timing = match file.run.q_timing.as_str() {
        "alg1" => QTiming::Lagged,
        "eq14" => QTiming::Immediate,
        other => {
            return Err(Error::Config(format!(
                "run.q_timing must be \"alg1\" or \"eq14\", got {other:?}"
            )))
        }
    };
    let bounds = HBounds {
        logit_lo: file.bounds.logit_lo,
        logit_hi: file.bounds.logit_hi,
        sigma_lo: file.bounds.sigma_lo,
        sigma_hi: file.bounds.sigma_hi,
        r_lo: file.bounds.r_lo,
        r_hi: file.bounds.r_hi,
    };
    if bounds.logit_lo > bounds.logit_hi
        || bounds.sigma_lo > bounds.sigma_hi
        || bounds.r_lo > bounds.r_hi
        || bounds.sigma_lo <= 0.0
    {
        return Err(Error::Config("bounds must be ordered with sigma_lo > 0".into()));
    }

    Ok(RunConfig {
        model,
        policy,
        schedule: StepSchedule {
            scale: file.schedule.scale,
            exponent: file.schedule.exponent,
        },
        bounds,
        init: InitRanges {
            logit_half_width: file.init.logit_half_width,
            r_half_width: file.init.r_half_width,
            sigma: file.init.sigma,
        },
        steps: file.run.steps,
        seed: file.run.seed,
        out_dir: PathBuf::from(file.run.out_dir),
        log_interval: file.run.log_interval,
        eval_interval: file.run.eval_interval,
        eval_episodes: file.run.eval_episodes,
        eval_steps: file.run.eval_steps,
        t_mode,
        q_timing,
        initial_state: file.run.initial_state,
    })
}

fn flatten2(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn flatten3(v: &[Vec<Vec<f64>>]) -> Vec<f64> {
    v.iter().flatten().flatten().copied().collect()
}
