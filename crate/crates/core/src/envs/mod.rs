//! Desk-scale control tasks and a tiny enumerable MDP.
//!
//! Continuous tasks integrate their ODE with semi-implicit Euler at a base
//! physics step `h`, `sub_steps` times per environment step. Rewards are the
//! negative integrated cost over the same interval, so episode returns do not
//! depend on how finely time is sliced.

mod oracle;
mod pendulum;
mod point_mass;

pub use oracle::{OracleMdp, TabularPolicy, TabularValue};
pub use pendulum::Pendulum;
pub use point_mass::PointMass;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: f64,
    pub action_high: f64,
    /// Physics step in seconds.
    pub h: f64,
    /// Physics steps per environment step.
    pub sub_steps: usize,
    /// Environment steps before an episode is truncated.
    pub time_limit: usize,
}

impl EnvSpec {
    pub fn step_duration(&self) -> f64 {
        self.h * self.sub_steps as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("env.h must be > 0, got {}", self.h)));
        }
        if self.sub_steps == 0 {
            return Err(Error::Config("env.sub_steps must be >= 1".into()));
        }
        if self.time_limit == 0 {
            return Err(Error::Config("env.time_limit must be >= 1".into()));
        }
        Ok(())
    }

    pub fn clip(&self, a: &[f64]) -> Vec<f64> {
        a.iter().map(|x| x.clamp(self.action_low, self.action_high)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns its first observation.
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;

    /// Advances one environment step. Actions are clipped to the action box.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    fn observe(&self) -> Vec<f64>;
}

pub fn make_env(name: &str, h: f64, sub_steps: usize, time_limit: Option<usize>) -> Result<Box<dyn Env>> {
    match name {
        "point_mass" | "point-mass" | "reacher" => Ok(Box::new(PointMass::new(h, sub_steps, time_limit)?)),
        "pendulum" => Ok(Box::new(Pendulum::new(h, sub_steps, time_limit)?)),
        other => Err(Error::Config(format!("unknown environment {other:?}"))),
    }
}

pub(crate) fn check_action(spec: &EnvSpec, a: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_dim("action", spec.action_dim, a.len())?;
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }
    Ok(spec.clip(a))
}
