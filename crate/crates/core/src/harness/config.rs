//! Experiment configuration files.
//!
//! Every field is optional. Values resolve in the order command-line flag,
//! then config file, then built-in default. Relative file paths inside a
//! config file are resolved against the directory containing that file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::fixtures::{random_mdp, two_state_risky_fixture};
use crate::learners::{
    StepSchedule, DEFAULT_ALPHA_EXPONENT, DEFAULT_BETA_EXPONENT, DEFAULT_ONE_TS_EXPONENT,
};
use crate::mdp::{MdpDocument, TabularMdp};
use crate::sim::{Behavior, SamplingMode, DEFAULT_EPSILON};
use crate::solvers::{SolverOptions, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};

pub const DEFAULT_NUM_STEPS: u64 = 100_000;
pub const DEFAULT_FIT_START: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Solve,
    #[serde(rename = "learn-2ts")]
    Learn2ts,
    #[serde(rename = "learn-1ts")]
    Learn1ts,
    ScalarRate,
    OracleCheck,
    Example,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    /// The two-state safe/risk example.
    Fixture,
    File {
        path: PathBuf,
    },
    Inline {
        mdp: MdpDocument,
    },
    Random {
        num_states: usize,
        num_actions: usize,
        reward_range: (f64, f64),
        discount: f64,
        risk: f64,
        seed: u64,
    },
}

impl MdpSource {
    pub fn load(&self) -> Result<TabularMdp> {
        let mdp = match self {
            Self::Fixture => two_state_risky_fixture(),
            Self::File { path } => {
                if !path.exists() {
                    return Err(config(format!(
                        "MDP file {} does not exist",
                        path.display()
                    )));
                }
                TabularMdp::load(path)?
            }
            Self::Inline { mdp } => mdp.clone().into_mdp()?,
            Self::Random {
                num_states,
                num_actions,
                reward_range,
                discount,
                risk,
                seed,
            } => random_mdp(
                *num_states,
                *num_actions,
                *reward_range,
                *discount,
                *risk,
                *seed,
            )?,
        };
        let report = mdp.validate();
        if !report.is_clean() {
            return Err(config(format!("invalid MDP: {report}")));
        }
        Ok(mdp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    pub count: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            count: 50,
            max_states: 4,
            max_actions: 3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSettings {
    pub c_ell: f64,
    pub c_u: f64,
    pub x_star: f64,
    pub gamma: f64,
    pub noise: f64,
    #[serde(default)]
    pub x0: Option<f64>,
}

impl Default for ScalarSettings {
    fn default() -> Self {
        Self {
            c_ell: 0.5,
            c_u: 2.0,
            x_star: 1.0,
            gamma: 0.9,
            noise: 0.3,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<StepSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<StepSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u64>,
    /// Inclusive `[first, last]` snapshot range for slope fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(u64, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_iterates: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<ScalarSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(MdpSource::File { path }) = &mut cfg.mdp {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(dir) = &mut cfg.out_dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `overrides` replace the ones in `self`.
    pub fn merged_with(self, overrides: ExperimentConfig) -> Self {
        Self {
            task: overrides.task.or(self.task),
            mdp: overrides.mdp.or(self.mdp),
            seeds: overrides.seeds.or(self.seeds),
            num_steps: overrides.num_steps.or(self.num_steps),
            alpha: overrides.alpha.or(self.alpha),
            beta: overrides.beta.or(self.beta),
            sampling: overrides.sampling.or(self.sampling),
            tolerance: overrides.tolerance.or(self.tolerance),
            max_iterations: overrides.max_iterations.or(self.max_iterations),
            fit_window: overrides.fit_window.or(self.fit_window),
            keep_iterates: overrides.keep_iterates.or(self.keep_iterates),
            oracle: overrides.oracle.or(self.oracle),
            scalar: overrides.scalar.or(self.scalar),
            out_dir: overrides.out_dir.or(self.out_dir),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn mdp(&self) -> Result<TabularMdp> {
        self.mdp.as_ref().unwrap_or(&MdpSource::Fixture).load()
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let tolerance = self.tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if !(tolerance > 0.0) {
            return Err(config(format!("tolerance {tolerance} must be positive")));
        }
        Ok(SolverOptions {
            tolerance,
            max_iterations: self.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
        })
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        match &self.seeds {
            Some(s) if s.is_empty() => Err(config("seeds list is empty")),
            Some(s) => Ok(s.clone()),
            None => Ok(vec![0]),
        }
    }

    pub fn num_steps(&self) -> Result<u64> {
        match self.num_steps.unwrap_or(DEFAULT_NUM_STEPS) {
            0 => Err(config("num_steps must be positive")),
            n => Ok(n),
        }
    }

    pub fn fit_window(&self) -> Result<(u64, u64)> {
        let steps = self.num_steps()?;
        let window = self
            .fit_window
            .unwrap_or((DEFAULT_FIT_START.min(steps), steps));
        if window.0 > window.1 {
            return Err(config(format!("fit window {window:?} is empty")));
        }
        Ok(window)
    }

    pub fn alpha(&self, task: Task) -> StepSchedule {
        self.alpha.unwrap_or(StepSchedule::power_law(match task {
            Task::Learn1ts => DEFAULT_ONE_TS_EXPONENT,
            _ => DEFAULT_ALPHA_EXPONENT,
        }))
    }

    pub fn beta(&self) -> StepSchedule {
        self.beta
            .unwrap_or(StepSchedule::power_law(DEFAULT_BETA_EXPONENT))
    }

    /// Generative uniform sampling for the two-timescale learner, a Markovian
    /// ε-greedy trajectory for the one-timescale learner.
    pub fn sampling(&self, task: Task) -> SamplingMode {
        self.sampling.clone().unwrap_or(match task {
            Task::Learn1ts => SamplingMode::Markovian {
                behavior: Behavior::EpsilonGreedy {
                    epsilon: DEFAULT_EPSILON,
                },
            },
            _ => SamplingMode::GenerativeIid { nu: None },
        })
    }

    pub fn oracle(&self) -> OracleSettings {
        self.oracle.unwrap_or_default()
    }

    pub fn scalar(&self) -> ScalarSettings {
        self.scalar.unwrap_or_default()
    }
}
