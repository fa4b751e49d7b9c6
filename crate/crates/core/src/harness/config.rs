//! Run configuration as flat `key = value` text.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank lines
//! are ignored; keys are unique. Lists (`hidden`) are comma separated.
//! Recognised keys:
//!
//! | key | meaning |
//! |---|---|
//! | `env.name` | `point_mass`, `pendulum` |
//! | `env.h`, `env.sub_steps`, `env.time_limit` | integration step, physics steps per env step, episode limit |
//! | `algorithm` | `susacer` or `acer` |
//! | `gamma`, `n`, `b`, `sigma` | discount, trajectory length (= sustain cap), truncation level, base std |
//! | `actor_lr`, `critic_lr` | ADAM step-sizes |
//! | `e0`, `te` | initial expected duration and its decay horizon |
//! | `batch`, `learning_start`, `memory`, `hidden` | update batch, warm-up steps, replay size, layer widths |
//! | `total_steps`, `eval_interval`, `eval_episodes`, `seed`, `out` | run protocol |

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acer::{AgentConfig, Algorithm};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: String,
    pub h: f64,
    pub sub_steps: usize,
    /// `None` keeps the environment's own limit.
    pub time_limit: Option<usize>,
    pub agent: AgentConfig,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    /// Desk-scale protocol on the point-mass reacher: smaller networks and
    /// batch than the full-scale agent defaults so a run takes seconds.
    fn default() -> Self {
        let total_steps = 200_000;
        let mut agent = AgentConfig::default();
        agent.schedule.te = total_steps as f64 / 10.0;
        agent.batch = 4;
        agent.hidden = vec![32, 32];
        agent.learning_start = 1_000;
        agent.memory = 200_000;
        Self {
            env: "point_mass".into(),
            h: 0.01,
            sub_steps: 1,
            time_limit: None,
            agent,
            total_steps,
            eval_interval: 5_000,
            eval_episodes: 5,
            seed: 0,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key:?}")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.finalize()?;
        Ok(cfg)
    }

    /// Applies one `key = value` override. Call [`RunConfig::finalize`] afterwards.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let a = &mut self.agent;
        match key {
            "env.name" => self.env = value.to_string(),
            "env.h" => self.h = parse(key, value)?,
            "env.sub_steps" => self.sub_steps = parse(key, value)?,
            "env.time_limit" => self.time_limit = Some(parse(key, value)?),
            "algorithm" => a.algorithm = value.parse()?,
            "gamma" => a.gamma = parse(key, value)?,
            "n" => a.n = parse(key, value)?,
            "b" => a.b = parse(key, value)?,
            "sigma" => a.sigma_base = parse(key, value)?,
            "actor_lr" => a.actor_lr = parse(key, value)?,
            "critic_lr" => a.critic_lr = parse(key, value)?,
            "e0" => a.schedule.e0 = parse(key, value)?,
            "te" => a.schedule.te = parse(key, value)?,
            "batch" => a.batch = parse(key, value)?,
            "learning_start" => a.learning_start = parse(key, value)?,
            "memory" => a.memory = parse(key, value)?,
            "hidden" => {
                a.hidden = value
                    .split(',')
                    .map(|w| parse(key, w.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "total_steps" => self.total_steps = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Ties the sustain cap to `n`, forces `E0 = 1` for ACER, and validates.
    pub fn finalize(&mut self) -> Result<()> {
        self.agent.schedule.cap = self.agent.n;
        if self.agent.algorithm == Algorithm::Acer {
            self.agent.schedule.e0 = 1.0;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.agent.algorithm == Algorithm::Acer && self.agent.schedule.e0 != 1.0 {
            return Err(Error::Config("acer runs use E0 = 1".into()));
        }
        if self.eval_interval == 0 || self.total_steps % self.eval_interval != 0 {
            return Err(Error::Config(format!(
                "eval_interval ({}) must be positive and divide total_steps ({})",
                self.eval_interval, self.total_steps
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be >= 1".into()));
        }
        crate::envs::make_env(&self.env, self.h, self.sub_steps, self.time_limit)?;
        Ok(())
    }

    /// Flat text form accepted by [`RunConfig::parse_str`].
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let mut lines = vec![
            format!("env.name = {}", self.env),
            format!("env.h = {}", self.h),
            format!("env.sub_steps = {}", self.sub_steps),
        ];
        if let Some(t) = self.time_limit {
            lines.push(format!("env.time_limit = {t}"));
        }
        lines.extend([
            format!("algorithm = {}", a.algorithm),
            format!("gamma = {}", a.gamma),
            format!("n = {}", a.n),
            format!("b = {}", a.b),
            format!("sigma = {}", a.sigma_base),
            format!("actor_lr = {}", a.actor_lr),
            format!("critic_lr = {}", a.critic_lr),
            format!("e0 = {}", a.schedule.e0),
            format!("te = {}", a.schedule.te),
            format!("batch = {}", a.batch),
            format!("learning_start = {}", a.learning_start),
            format!("memory = {}", a.memory),
            format!(
                "hidden = {}",
                a.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("total_steps = {}", self.total_steps),
            format!("eval_interval = {}", self.eval_interval),
            format!("eval_episodes = {}", self.eval_episodes),
            format!("seed = {}", self.seed),
        ]);
        if let Some(out) = &self.out {
            lines.push(format!("out = {}", out.display()));
        }
        lines.join("\n") + "\n"
    }
}
