use rand::Rng as _;

use super::{check_action, Env, EnvSpec, StepResult};
use crate::{Error, Result, Rng};

/// 2-D double integrator that must reach the origin.
///
/// Observation `[x, y, vx, vy]`, action is the acceleration in `[-1, 1]^2`.
/// Cost rate `|p| + 0.01 |a|^2`; the episode terminates once `|p| < GOAL_RADIUS`.
#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
}

impl PointMass {
    pub const ARENA: f64 = 1.0;
    pub const GOAL_RADIUS: f64 = 0.1;
    pub const DEFAULT_TIME_LIMIT: usize = 300;

    pub fn new(h: f64, sub_steps: usize, time_limit: Option<usize>) -> Result<Self> {
        let spec = EnvSpec {
            name: "point_mass".into(),
            state_dim: 4,
            action_dim: 2,
            action_low: -1.0,
            action_high: 1.0,
            h,
            sub_steps,
            time_limit: time_limit.unwrap_or(Self::DEFAULT_TIME_LIMIT),
        };
        spec.validate()?;
        Ok(Self {
            spec,
            pos: [0.0; 2],
            vel: [0.0; 2],
            steps: 0,
        })
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.steps = 0;
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }
}

impl Env for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let pos = [
            rng.random_range(-Self::ARENA..Self::ARENA),
            rng.random_range(-Self::ARENA..Self::ARENA),
        ];
        self.set_state(pos, [0.0; 2]);
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = check_action(&self.spec, action)?;
        let h = self.spec.h;
        let effort = 0.01 * (a[0] * a[0] + a[1] * a[1]);
        let mut cost = 0.0;
        for _ in 0..self.spec.sub_steps {
            for i in 0..2 {
                self.vel[i] += h * a[i];
                self.pos[i] += h * self.vel[i];
            }
            cost += h * (self.pos[0].hypot(self.pos[1]) + effort);
        }
        if self.pos.iter().chain(&self.vel).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point-mass state".into()));
        }
        self.steps += 1;
        let terminal = self.pos[0].hypot(self.pos[1]) < Self::GOAL_RADIUS;
        Ok(StepResult {
            state: self.observe(),
            reward: -cost,
            terminal,
            truncated: !terminal && self.steps >= self.spec.time_limit,
        })
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}
