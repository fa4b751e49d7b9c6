use std::f64::consts::PI;

use rand::Rng as _;

use super::{check_action, Env, EnvSpec, StepResult};
use crate::{Error, Result, Rng};

/// Torque-limited pendulum swing-up. Angle 0 is upright.
///
/// Dynamics `w' = (g / l) sin(th) + u * MAX_TORQUE / (m l^2)`, observation
/// `[cos th, sin th, w]`, cost rate `th^2 + 0.1 w^2 + 0.001 u^2` with `th`
/// wrapped to `[-pi, pi)`. No terminal state.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    omega: f64,
    steps: usize,
}

impl Pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const LENGTH: f64 = 1.0;
    pub const MASS: f64 = 1.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const DEFAULT_TIME_LIMIT: usize = 200;

    pub fn new(h: f64, sub_steps: usize, time_limit: Option<usize>) -> Result<Self> {
        let spec = EnvSpec {
            name: "pendulum".into(),
            state_dim: 3,
            action_dim: 1,
            action_low: -1.0,
            action_high: 1.0,
            h,
            sub_steps,
            time_limit: time_limit.unwrap_or(Self::DEFAULT_TIME_LIMIT),
        };
        spec.validate()?;
        Ok(Self {
            spec,
            theta: 0.0,
            omega: 0.0,
            steps: 0,
        })
    }

    pub fn set_state(&mut self, theta: f64, omega: f64) {
        self.theta = theta;
        self.omega = omega;
        self.steps = 0;
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn angular_velocity(&self) -> f64 {
        self.omega
    }

    /// Mechanical energy per unit `m l^2`, conserved when no torque is applied.
    pub fn energy(&self) -> f64 {
        0.5 * self.omega * self.omega + Self::GRAVITY / Self::LENGTH * self.theta.cos()
    }
}

pub(crate) fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let theta = rng.random_range(-PI..PI);
        let omega = rng.random_range(-1.0..1.0);
        self.set_state(theta, omega);
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let u = check_action(&self.spec, action)?[0];
        let h = self.spec.h;
        let torque = u * Self::MAX_TORQUE / (Self::MASS * Self::LENGTH * Self::LENGTH);
        let mut cost = 0.0;
        for _ in 0..self.spec.sub_steps {
            let accel = Self::GRAVITY / Self::LENGTH * self.theta.sin() + torque;
            self.omega = (self.omega + h * accel).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
            self.theta += h * self.omega;
            let th = wrap_angle(self.theta);
            cost += h * (th * th + 0.1 * self.omega * self.omega + 0.001 * u * u);
        }
        if !(self.theta.is_finite() && self.omega.is_finite()) {
            return Err(Error::NonFinite("pendulum state".into()));
        }
        self.steps += 1;
        Ok(StepResult {
            state: self.observe(),
            reward: -cost,
            terminal: false,
            truncated: self.steps >= self.spec.time_limit,
        })
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.omega]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_conserved_without_torque() {
        let mut env = Pendulum::new(1e-3, 1, Some(10_000)).unwrap();
        // Small swing around the hanging position.
        env.set_state(PI - 0.3, 0.0);
        let e0 = env.energy();
        let mut drift: f64 = 0.0;
        for _ in 0..1000 {
            env.step(&[0.0]).unwrap();
            drift = drift.max((env.energy() - e0).abs());
        }
        assert!(drift < 1e-3, "energy drift {drift}");
    }

    #[test]
    fn sub_stepping_is_consistent() {
        let mut coarse = Pendulum::new(0.01, 4, None).unwrap();
        let mut fine = Pendulum::new(0.01, 1, None).unwrap();
        coarse.set_state(1.2, -0.4);
        fine.set_state(1.2, -0.4);
        let big = coarse.step(&[0.6]).unwrap();
        let mut reward = 0.0;
        for _ in 0..4 {
            reward += fine.step(&[0.6]).unwrap().reward;
        }
        assert!((coarse.angle() - fine.angle()).abs() < 1e-12);
        assert!((coarse.angular_velocity() - fine.angular_velocity()).abs() < 1e-12);
        assert!((big.reward - reward).abs() < 1e-12);
    }

    #[test]
    fn never_terminal_truncates_at_limit() {
        let mut env = Pendulum::new(0.01, 1, Some(3)).unwrap();
        env.set_state(0.5, 0.0);
        let r: Vec<(bool, bool)> = (0..3)
            .map(|_| {
                let s = env.step(&[1.0]).unwrap();
                (s.terminal, s.truncated)
            })
            .collect();
        assert_eq!(r, vec![(false, false), (false, false), (false, true)]);
    }

    #[test]
    fn reset_distribution() {
        let mut env = Pendulum::new(0.01, 1, None).unwrap();
        let mut rng = crate::seeded_rng(17);
        let n = 20_000;
        let (mut th_sq, mut w_sq, mut th_mean) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            env.reset(&mut rng);
            let (th, w) = (env.angle(), env.angular_velocity());
            assert!((-PI..PI).contains(&th) && (-1.0..1.0).contains(&w));
            th_mean += th / n as f64;
            th_sq += th * th / n as f64;
            w_sq += w * w / n as f64;
        }
        assert!(th_mean.abs() < 4.0 * (PI * PI / 3.0 / n as f64).sqrt());
        assert!((th_sq - PI * PI / 3.0).abs() < 0.05);
        assert!((w_sq - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn upright_at_rest_costs_only_effort() {
        let mut env = Pendulum::new(0.01, 1, None).unwrap();
        env.set_state(0.0, 0.0);
        let r = env.step(&[0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!((wrap_angle(2.0 * PI + 0.1) - wrap_angle(0.1)).abs() < 1e-12);
    }
}
