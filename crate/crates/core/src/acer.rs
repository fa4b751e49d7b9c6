//! The learning rule: environment-level action selection, trajectory
//! importance sampling over sustained actions, soft-truncated m-step
//! temporal-difference estimates, and the actor/critic updates.
//!
//! Plain ACER with constant-length n-step trajectories is kept as a separate
//! code path ([`Algorithm::Acer`]) so that its equivalence with sustain
//! disabled (`E0 = 1`) is a real check rather than a tautology.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::approximator::{AdamState, PolicyParams, ValueParams, DEFAULT_HIDDEN};
use crate::replay::{ReplayBuffer, Trajectory, Transition};
use crate::sustain::{self, SustainSchedule};
use crate::{Error, Result};

/// Anything that can report `ln pi_a(a | s)` for the current parameters.
pub trait LogDensity {
    fn log_density(&self, s: &[f64], a: &[f64]) -> Result<f64>;
}

impl LogDensity for PolicyParams {
    fn log_density(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        PolicyParams::log_density(self, s, a)
    }
}

/// Anything that estimates the discounted return from a state.
pub trait StateValue {
    fn value(&self, s: &[f64]) -> Result<f64>;
}

impl StateValue for ValueParams {
    fn value(&self, s: &[f64]) -> Result<f64> {
        ValueParams::value(self, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    SusAcer,
    Acer,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::SusAcer => "susacer",
            Algorithm::Acer => "acer",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "susacer" => Ok(Algorithm::SusAcer),
            "acer" => Ok(Algorithm::Acer),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    /// Trajectory length used for updates; also the sustain cap.
    pub n: usize,
    /// Soft-truncation level.
    pub b: f64,
    /// Action standard deviation at per-step control (`E = 1`).
    pub sigma_base: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub schedule: SustainSchedule,
    /// Trajectories averaged per update.
    pub batch: usize,
    /// Environment steps before updates begin.
    pub learning_start: u64,
    /// Replay capacity in transitions.
    pub memory: usize,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::SusAcer,
            gamma: 0.99,
            n: 4,
            b: 3.0,
            sigma_base: 0.4,
            actor_lr: 3e-5,
            critic_lr: 1e-4,
            schedule: SustainSchedule {
                e0: 2.0,
                te: 1e5,
                cap: 4,
            },
            batch: 256,
            learning_start: 10_000,
            memory: 1_000_000,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if self.n == 0 {
            return fail("trajectory length n must be >= 1".into());
        }
        if !(self.b > 0.0) {
            return fail(format!("truncation level b must be > 0, got {}", self.b));
        }
        if !(self.sigma_base > 0.0) {
            return fail(format!("sigma_base must be > 0, got {}", self.sigma_base));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return fail("step-sizes must be > 0".into());
        }
        if self.schedule.cap != self.n {
            return fail(format!(
                "sustain cap ({}) must equal trajectory length n ({})",
                self.schedule.cap, self.n
            ));
        }
        SustainSchedule::new(self.schedule.e0, self.schedule.te, self.schedule.cap)?;
        if self.batch == 0 || self.memory == 0 {
            return fail("batch and memory must be >= 1".into());
        }
        Ok(())
    }

    /// Schedule that actually drives action selection: per-step for ACER.
    pub fn effective_schedule(&self) -> SustainSchedule {
        match self.algorithm {
            Algorithm::SusAcer => self.schedule,
            Algorithm::Acer => SustainSchedule::per_step(self.n),
        }
    }
}

/// Outcome of one environment-level action selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Vec<f64>,
    pub fresh: bool,
    pub p_eff: f64,
    pub base_logd: f64,
}

/// Selects the action for global step `t`.
///
/// `prev` is the previous step's action and run length within the current
/// episode, `None` at episode start (which forces a fresh draw). The actor's
/// standard deviation is set to `sigma_scale(E(t), sigma_base)` first.
pub fn act<R: rand::Rng + ?Sized>(
    theta: &mut PolicyParams,
    schedule: &SustainSchedule,
    sigma_base: f64,
    t: u64,
    prev: Option<(&[f64], usize)>,
    s: &[f64],
    rng: &mut R,
) -> Result<Decision> {
    theta.set_sigma_uniform(sustain::sigma_scale(schedule.expected_duration(t), sigma_base)?)?;
    let p_eff = match prev {
        None => 1.0,
        Some((_, run_len)) => schedule.effective_p(t, run_len)?,
    };
    match prev {
        Some((a_prev, _)) if !sustain::should_terminate(rng, p_eff) => Ok(Decision {
            action: a_prev.to_vec(),
            fresh: false,
            p_eff,
            base_logd: theta.log_density(s, a_prev)?,
        }),
        _ => {
            let (action, base_logd) = theta.sample_with_log_density(s, rng)?;
            Ok(Decision {
                action,
                fresh: true,
                p_eff,
                base_logd,
            })
        }
    }
}

/// ACER action selection: a fresh draw with `sigma_base` at every step.
pub fn act_per_step<R: rand::Rng + ?Sized>(
    theta: &mut PolicyParams,
    sigma_base: f64,
    s: &[f64],
    rng: &mut R,
) -> Result<Decision> {
    theta.set_sigma_uniform(sigma_base)?;
    let (action, base_logd) = theta.sample_with_log_density(s, rng)?;
    Ok(Decision {
        action,
        fresh: true,
        p_eff: 1.0,
        base_logd,
    })
}

/// Density ratio of one non-initial trajectory step between the current
/// policy (`theta`, `p_now`) and the behavior policy that recorded it.
///
/// Sustained steps contribute `(1 - p_now) / (1 - p_eff)`; fresh steps
/// contribute `(p_now / p_eff) * pi_a(a|s) / pi_a_behavior(a|s)`.
pub fn step_ratio<P: LogDensity + ?Sized>(tr: &Transition, theta: &P, p_now: f64) -> Result<f64> {
    if tr.fresh {
        let logd = theta.log_density(&tr.s, &tr.a)?;
        Ok((p_now / tr.p_eff) * (logd - tr.base_logd).exp())
    } else {
        if tr.p_eff >= 1.0 {
            return Err(Error::Contract(
                "sustained transition recorded with termination probability 1".into(),
            ));
        }
        if p_now >= 1.0 {
            return Ok(0.0);
        }
        Ok((1.0 - p_now) / (1.0 - tr.p_eff))
    }
}

/// Importance weights `IS^m`, `m = 1..=len`, for a trajectory starting with a
/// fresh step. Replay-time termination probabilities come from the schedule
/// at `t_now` with the same cap logic as recording.
pub fn trajectory_is<P: LogDensity + ?Sized>(
    traj: &Trajectory,
    theta: &P,
    schedule: &SustainSchedule,
    t_now: u64,
) -> Result<Vec<f64>> {
    let steps = &traj.steps;
    let first = &steps[0];
    if !first.fresh {
        return Err(Error::Contract("trajectory must start with a fresh step".into()));
    }
    // Log-density ratios are summed and exponentiated once per prefix; the
    // termination-probability factors are carried as a separate product.
    let mut log_ratio = theta.log_density(&first.s, &first.a)? - first.base_logd;
    let mut scale = 1.0;
    let mut is = Vec::with_capacity(steps.len());
    is.push(log_ratio.exp());
    for k in 1..steps.len() {
        let tr = &steps[k];
        let p_now = schedule.effective_p(t_now, steps[k - 1].run_len)?;
        if tr.fresh {
            scale *= p_now / tr.p_eff;
            // A zero prefix stays zero; skip the density evaluation.
            if scale != 0.0 {
                log_ratio += theta.log_density(&tr.s, &tr.a)? - tr.base_logd;
            }
        } else {
            scale *= step_ratio(tr, theta, p_now)?;
        }
        is.push(if scale == 0.0 { 0.0 } else { scale * log_ratio.exp() });
    }
    Ok(is)
}

/// Baseline ACER weights: product of per-step actor density ratios.
pub fn acer_trajectory_is<P: LogDensity + ?Sized>(traj: &Trajectory, theta: &P) -> Result<Vec<f64>> {
    let mut is = Vec::with_capacity(traj.len());
    let mut log_ratio = 0.0;
    for (k, tr) in traj.steps.iter().enumerate() {
        let d = theta.log_density(&tr.s, &tr.a)? - tr.base_logd;
        log_ratio = if k == 0 { d } else { log_ratio + d };
        is.push(log_ratio.exp());
    }
    Ok(is)
}

/// `psi_b(x) = b tanh(x / b)`.
pub fn soft_truncate(x: f64, b: f64) -> f64 {
    b * (x / b).tanh()
}

/// Whether `rho = psi_b(x)` respects `|rho| < b`, allowing equality only where
/// `tanh` has rounded to exactly 1 in floating point.
pub fn truncation_within_bound(rho: f64, x: f64, b: f64) -> bool {
    rho.abs() < b || (rho.abs() == b && (x / b).abs().tanh() == 1.0)
}

/// `A^m = sum_{i<m} gamma^i r_i + gamma^m V(s_m) - V(s_0)`; the bootstrap term
/// is dropped when step `m - 1` is terminal.
pub fn td_m<V: StateValue + ?Sized>(traj: &Trajectory, nu: &V, gamma: f64, m: usize) -> Result<f64> {
    if m == 0 || m > traj.len() {
        return Err(Error::Contract(format!("m = {m} outside 1..={}", traj.len())));
    }
    let mut ret = 0.0;
    let mut disc = 1.0;
    for tr in &traj.steps[..m] {
        ret += disc * tr.r;
        disc *= gamma;
    }
    let last = &traj.steps[m - 1];
    if !last.terminal {
        ret += disc * nu.value(&last.s_next)?;
    }
    Ok(ret - nu.value(&traj.steps[0].s)?)
}

/// All `A^m` for `m = 1..=len`, sharing value evaluations.
pub fn td_all<V: StateValue + ?Sized>(traj: &Trajectory, nu: &V, gamma: f64) -> Result<Vec<f64>> {
    let v0 = nu.value(&traj.steps[0].s)?;
    let mut out = Vec::with_capacity(traj.len());
    let mut ret = 0.0;
    let mut disc = 1.0;
    for tr in &traj.steps {
        ret += disc * tr.r;
        disc *= gamma;
        let boot = if tr.terminal { 0.0 } else { disc * nu.value(&tr.s_next)? };
        out.push(ret + boot - v0);
    }
    Ok(out)
}

/// Ascent directions for actor and critic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePair {
    pub dtheta: Vec<f64>,
    pub dnu: Vec<f64>,
}

impl UpdatePair {
    pub fn zeros(theta: &PolicyParams, nu: &ValueParams) -> Self {
        Self {
            dtheta: vec![0.0; theta.mean.params().len()],
            dnu: vec![0.0; nu.net.params().len()],
        }
    }

    fn scale(&mut self, c: f64) {
        self.dtheta.iter_mut().chain(self.dnu.iter_mut()).for_each(|x| *x *= c);
    }
}

/// Intermediate quantities of one trajectory's update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateTrace {
    pub is: Vec<f64>,
    pub rho: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Weighted average `d = (1/n') sum_m A^m rho^m`.
    pub d: f64,
}

/// Computes the weights and `d` for one trajectory.
pub fn trace_update(
    traj: &Trajectory,
    theta: &PolicyParams,
    nu: &ValueParams,
    schedule: &SustainSchedule,
    t_now: u64,
    config: &AgentConfig,
) -> Result<UpdateTrace> {
    let is = match config.algorithm {
        Algorithm::SusAcer => trajectory_is(traj, theta, schedule, t_now)?,
        Algorithm::Acer => acer_trajectory_is(traj, theta)?,
    };
    let rho: Vec<f64> = is.iter().map(|&x| soft_truncate(x, config.b)).collect();
    let advantages = td_all(traj, nu, config.gamma)?;
    let d = advantages.iter().zip(&rho).map(|(a, r)| a * r).sum::<f64>() / traj.len() as f64;
    Ok(UpdateTrace { is, rho, advantages, d })
}

/// Adds one trajectory's update into `acc` and returns its trace.
pub fn accumulate_update(
    traj: &Trajectory,
    theta: &PolicyParams,
    nu: &ValueParams,
    schedule: &SustainSchedule,
    t_now: u64,
    config: &AgentConfig,
    acc: &mut UpdatePair,
) -> Result<UpdateTrace> {
    let trace = trace_update(traj, theta, nu, schedule, t_now, config)?;
    if !trace.d.is_finite() {
        return Err(Error::NonFinite(format!("temporal-difference estimate d = {}", trace.d)));
    }
    if trace.d != 0.0 {
        let first = &traj.steps[0];
        nu.add_grad_value(&first.s, trace.d, &mut acc.dnu)?;
        theta.add_grad_log_density(&first.s, &first.a, trace.d, &mut acc.dtheta)?;
    }
    Ok(trace)
}

/// Parameter update from a single trajectory: `dnu = grad V(s_0) d`,
/// `dtheta = grad ln pi_a(a_0|s_0) d`.
pub fn compute_update(
    traj: &Trajectory,
    theta: &PolicyParams,
    nu: &ValueParams,
    schedule: &SustainSchedule,
    t_now: u64,
    config: &AgentConfig,
) -> Result<UpdatePair> {
    let mut pair = UpdatePair::zeros(theta, nu);
    accumulate_update(traj, theta, nu, schedule, t_now, config, &mut pair)?;
    Ok(pair)
}

/// Summary of one `train_step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub trajectories: usize,
    pub mean_d: f64,
    pub max_rho: f64,
}

/// Actor, critic, their optimizers, the replay memory and the step clock.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    schedule: SustainSchedule,
    pub policy: PolicyParams,
    pub critic: ValueParams,
    actor_opt: AdamState,
    critic_opt: AdamState,
    pub buffer: ReplayBuffer,
    t: u64,
}

impl Agent {
    pub fn new<R: rand::Rng + ?Sized>(
        config: AgentConfig,
        state_dim: usize,
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let policy = PolicyParams::init(state_dim, action_dim, &config.hidden, config.sigma_base, rng)?;
        let critic = ValueParams::init(state_dim, &config.hidden, rng)?;
        Ok(Self {
            schedule: config.effective_schedule(),
            actor_opt: AdamState::new(policy.mean.params().len(), config.actor_lr),
            critic_opt: AdamState::new(critic.net.params().len(), config.critic_lr),
            buffer: ReplayBuffer::new(config.memory),
            policy,
            critic,
            config,
            t: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn schedule(&self) -> &SustainSchedule {
        &self.schedule
    }

    /// Global environment step counter.
    pub fn clock(&self) -> u64 {
        self.t
    }

    pub fn act<R: rand::Rng + ?Sized>(
        &mut self,
        s: &[f64],
        prev: Option<(&[f64], usize)>,
        rng: &mut R,
    ) -> Result<Decision> {
        match self.config.algorithm {
            Algorithm::SusAcer => act(
                &mut self.policy,
                &self.schedule,
                self.config.sigma_base,
                self.t,
                prev,
                s,
                rng,
            ),
            Algorithm::Acer => act_per_step(&mut self.policy, self.config.sigma_base, s, rng),
        }
    }

    /// Stores a transition and advances the clock by one environment step.
    pub fn observe(&mut self, tr: Transition) -> Result<()> {
        self.buffer.push(tr)?;
        self.t += 1;
        Ok(())
    }

    /// Deterministic evaluation action `mu(s)`.
    pub fn greedy_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.policy.mu(s)
    }

    /// One averaged update from `batch` sampled trajectories. Returns `None`
    /// before the learning start or when no trajectory can be sampled.
    pub fn train_step<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<TrainStats>> {
        if self.t < self.config.learning_start || self.buffer.eligible_starts(self.config.n) == 0 {
            return Ok(None);
        }
        let sd = match self.config.algorithm {
            Algorithm::SusAcer => sustain::sigma_scale(self.schedule.expected_duration(self.t), self.config.sigma_base)?,
            Algorithm::Acer => self.config.sigma_base,
        };
        self.policy.set_sigma_uniform(sd)?;

        let mut acc = UpdatePair::zeros(&self.policy, &self.critic);
        let mut sum_d = 0.0;
        let mut max_rho: f64 = 0.0;
        for _ in 0..self.config.batch {
            let traj = self.buffer.sample_trajectory(self.config.n, rng)?;
            let trace = accumulate_update(
                &traj,
                &self.policy,
                &self.critic,
                &self.schedule,
                self.t,
                &self.config,
                &mut acc,
            )?;
            for (rho, is) in trace.rho.iter().zip(&trace.is) {
                if !truncation_within_bound(*rho, *is, self.config.b) {
                    return Err(Error::Contract(format!(
                        "truncated weight {rho} (from {is}) outside the bound {}",
                        self.config.b
                    )));
                }
                max_rho = max_rho.max(rho.abs());
            }
            sum_d += trace.d;
        }
        let batch = self.config.batch as f64;
        acc.scale(1.0 / batch);
        self.actor_opt.step(self.policy.mean.params_mut(), &acc.dtheta)?;
        self.critic_opt.step(self.critic.net.params_mut(), &acc.dnu)?;
        if self
            .policy
            .mean
            .params()
            .iter()
            .chain(self.critic.net.params())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite("network parameters after update".into()));
        }
        Ok(Some(TrainStats {
            trajectories: self.config.batch,
            mean_d: sum_d / batch,
            max_rho,
        }))
    }

    /// Hash of replay contents and the schedule clock.
    pub fn training_state_fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.buffer.fingerprint().hash(&mut h);
        self.t.hash(&mut h);
        for x in self.policy.mean.params().iter().chain(self.critic.net.params()) {
            x.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn checkpoint(&self) -> crate::approximator::Checkpoint {
        crate::approximator::Checkpoint {
            actor: self.policy.clone(),
            critic: self.critic.clone(),
            step: self.t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::Mlp;
    use crate::envs::{OracleMdp, TabularPolicy, TabularValue};

    fn tr(s: f64, a: f64, r: f64, s_next: f64, fresh: bool, p_eff: f64, base_logd: f64, run_len: usize) -> Transition {
        Transition {
            s: vec![s],
            a: vec![a],
            r,
            s_next: vec![s_next],
            terminal: false,
            truncated: false,
            fresh,
            p_eff,
            base_logd,
            run_len,
            t_global: 0,
        }
    }

    /// 1-D linear-Gaussian actor `mu(s) = w s + c` and linear critic `V(s) = u s + k`.
    fn linear(w: f64, c: f64, sd: f64, u: f64, k: f64) -> (PolicyParams, ValueParams) {
        (
            PolicyParams::new(Mlp::from_params(&[1, 1], vec![w, c]).unwrap(), vec![sd]).unwrap(),
            ValueParams::new(Mlp::from_params(&[1, 1], vec![u, k]).unwrap()).unwrap(),
        )
    }

    fn config(b: f64) -> AgentConfig {
        AgentConfig {
            b,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn step_ratio_examples() {
        let (theta, _) = linear(0.5, 0.1, 0.4, 0.0, 0.0);
        let sustained = tr(1.0, 0.3, 0.0, 1.0, false, 0.5, -1.0, 1);
        assert!((step_ratio(&sustained, &theta, 0.8).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(step_ratio(&sustained, &theta, 1.0).unwrap(), 0.0);

        let logd = theta.log_density(&[1.0], &[0.3]).unwrap();
        let fresh = tr(1.0, 0.3, 0.0, 1.0, true, 0.5, logd, 0);
        assert!((step_ratio(&fresh, &theta, 0.8).unwrap() - 1.6).abs() < 1e-15);
        // Cap forced both probabilities to 1: the factor is exactly 1.
        let forced = tr(1.0, 0.3, 0.0, 1.0, true, 1.0, logd, 0);
        assert_eq!(step_ratio(&forced, &theta, 1.0).unwrap(), 1.0);

        let impossible = tr(1.0, 0.3, 0.0, 1.0, false, 1.0, logd, 1);
        assert!(matches!(step_ratio(&impossible, &theta, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn on_policy_weights_are_one() {
        let (theta, _) = linear(0.5, 0.1, 0.4, 0.0, 0.0);
        let schedule = SustainSchedule::new(2.0, 1e9, 4).unwrap();
        let ld = |s: f64, a: f64| theta.log_density(&[s], &[a]).unwrap();
        let traj = Trajectory::new(vec![
            tr(0.2, 0.7, 0.0, 0.3, true, 1.0, ld(0.2, 0.7), 0),
            tr(0.3, 0.7, 0.0, 0.4, false, 0.5, ld(0.3, 0.7), 1),
            tr(0.4, -0.1, 0.0, 0.5, true, 0.5, ld(0.4, -0.1), 0),
            tr(0.5, -0.1, 0.0, 0.6, false, 0.5, ld(0.5, -0.1), 1),
        ])
        .unwrap();
        let is = trajectory_is(&traj, &theta, &schedule, 0).unwrap();
        assert_eq!(is, vec![1.0; 4]);
    }

    #[test]
    fn sustained_step_under_per_step_control_zeroes_the_tail() {
        let (theta, _) = linear(0.5, 0.1, 0.4, 0.0, 0.0);
        let ld = |s: f64, a: f64| theta.log_density(&[s], &[a]).unwrap();
        let traj = Trajectory::new(vec![
            tr(0.2, 0.7, 0.0, 0.3, true, 1.0, ld(0.2, 0.7) + 0.1, 0),
            tr(0.3, 0.7, 0.0, 0.4, false, 0.5, ld(0.3, 0.7), 1),
            tr(0.4, -0.1, 0.0, 0.5, true, 0.5, ld(0.4, -0.1), 0),
        ])
        .unwrap();
        let is = trajectory_is(&traj, &theta, &SustainSchedule::per_step(4), 0).unwrap();
        assert!(is[0] > 0.0 && is[0].is_finite());
        assert_eq!(&is[1..], &[0.0, 0.0]);
    }

    struct Shifted<'a>(&'a PolicyParams, f64);

    impl LogDensity for Shifted<'_> {
        fn log_density(&self, s: &[f64], a: &[f64]) -> Result<f64> {
            Ok(self.0.log_density(s, a)? + self.1)
        }
    }

    #[test]
    fn weights_invariant_to_common_density_scale() {
        let (theta, _) = linear(0.5, 0.1, 0.4, 0.0, 0.0);
        let (behavior, _) = linear(0.3, -0.2, 0.5, 0.0, 0.0);
        let ld = |s: f64, a: f64| behavior.log_density(&[s], &[a]).unwrap();
        let steps = vec![
            tr(0.2, 0.7, 0.0, 0.3, true, 1.0, ld(0.2, 0.7), 0),
            tr(0.3, 0.7, 0.0, 0.4, false, 0.4, ld(0.3, 0.7), 1),
            tr(0.4, -0.1, 0.0, 0.5, true, 0.4, ld(0.4, -0.1), 0),
        ];
        let schedule = SustainSchedule::new(3.0, 100.0, 4).unwrap();
        let base = trajectory_is(&Trajectory::new(steps.clone()).unwrap(), &theta, &schedule, 40).unwrap();
        let shift = 2.5f64.ln();
        let scaled: Vec<Transition> = steps
            .into_iter()
            .map(|mut t| {
                t.base_logd += shift;
                t
            })
            .collect();
        let other = trajectory_is(&Trajectory::new(scaled).unwrap(), &Shifted(&theta, shift), &schedule, 40).unwrap();
        for (x, y) in base.iter().zip(&other) {
            assert!(*x >= 0.0 && (x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn soft_truncation_examples() {
        assert_eq!(soft_truncate(0.0, 3.0), 0.0);
        assert!((soft_truncate(3.0, 3.0) - 3.0 * 1f64.tanh()).abs() < 1e-12);
        assert!((soft_truncate(3.0, 3.0) - 2.28478).abs() < 1e-5);
        assert!(soft_truncate(1e3, 3.0) > 3.0 - 1e-12);
        let xs = [0.0, 0.5, 1.0, 2.0, 5.0, 20.0];
        for w in xs.windows(2) {
            assert!(soft_truncate(w[0], 3.0) < soft_truncate(w[1], 3.0));
            assert!(truncation_within_bound(soft_truncate(w[1], 3.0), w[1], 3.0));
        }
        // Saturated in floating point: equality is tolerated only there.
        assert_eq!(soft_truncate(1e6, 3.0), 3.0);
        assert!(truncation_within_bound(3.0, 1e6, 3.0));
        assert!(!truncation_within_bound(3.0, 1.0, 3.0));
    }

    #[test]
    fn td_examples() {
        let zero = TabularValue([0.0; 3]);
        let ones = Trajectory::new(vec![
            Transition { r: 1.0, ..tr(0.0, 0.0, 1.0, 1.0, true, 1.0, 0.0, 0) },
            Transition { r: 1.0, ..tr(1.0, 1.0, 1.0, 2.0, true, 1.0, 0.0, 0) },
        ])
        .unwrap();
        assert!((td_m(&ones, &zero, 0.99, 2).unwrap() - 1.99).abs() < 1e-15);

        let v = TabularValue([0.7, 0.7, -2.0]);
        let flat = Trajectory::new(vec![tr(0.0, 0.0, 0.0, 1.0, true, 1.0, 0.0, 0)]).unwrap();
        assert!((td_m(&flat, &v, 1.0 - 1e-12, 1).unwrap()).abs() < 1e-11);
        assert!(td_m(&flat, &v, 0.9, 2).is_err());
        assert!(td_m(&flat, &v, 0.9, 0).is_err());

        let mut end = tr(0.0, 0.0, 0.5, 2.0, true, 1.0, 0.0, 0);
        end.terminal = true;
        let term = Trajectory::new(vec![end.clone()]).unwrap();
        assert_eq!(td_m(&term, &v, 0.9, 1).unwrap(), 0.5 - 0.7);
        end.terminal = false;
        end.truncated = true;
        let trunc = Trajectory::new(vec![end]).unwrap();
        assert!((td_m(&trunc, &v, 0.9, 1).unwrap() - (0.5 + 0.9 * -2.0 - 0.7)).abs() < 1e-15);
        for m in 1..=2 {
            assert_eq!(td_all(&ones, &v, 0.9).unwrap()[m - 1], td_m(&ones, &v, 0.9, m).unwrap());
        }
    }

    /// Exact `E[A^m]` over all `m`-step trajectories of the oracle MDP when
    /// `V` solves the policy's Bellman equation.
    #[test]
    fn exact_values_make_td_unbiased() {
        let mdp = OracleMdp::standard();
        let pi = TabularPolicy::new([[0.5, 0.3, 0.2], [0.2, 0.2, 0.6], [0.1, 0.7, 0.2]]).unwrap();
        let gamma = 0.9;
        let v = TabularValue(mdp.discounted_values(&pi, gamma));
        for m in 1..=3 {
            let mut expectation = 0.0;
            let mut total = 0.0;
            let count = 9usize.pow(m as u32) * 3;
            for code in 0..count {
                let mut c = code;
                let mut digit = |base: usize| {
                    let d = c % base;
                    c /= base;
                    d
                };
                let mut s = digit(3);
                let mut prob = mdp.initial[s];
                let mut steps = Vec::new();
                for _ in 0..m {
                    let a = digit(3);
                    let s2 = digit(3);
                    prob *= pi.prob(s, a) * mdp.transition[s][a][s2];
                    let mut t = tr(s as f64, a as f64, mdp.reward[s][a], s2 as f64, true, 1.0, 0.0, 0);
                    t.base_logd = pi.prob(s, a).ln();
                    steps.push(t);
                    s = s2;
                }
                total += prob;
                let traj = Trajectory::new(steps).unwrap();
                expectation += prob * td_m(&traj, &v, gamma, m).unwrap();
            }
            assert!((total - 1.0).abs() < 1e-12);
            assert!(expectation.abs() < 1e-12, "m={m}: {expectation}");
        }
    }

    #[test]
    fn act_respects_sustain_probabilities() {
        let (mut theta, _) = linear(0.5, 0.1, 0.4, 0.0, 0.0);
        let schedule = SustainSchedule::new(2.0, 1e12, 1000).unwrap();
        let mut rng = crate::seeded_rng(5);
        let s = [0.3];
        let prev = [0.25];
        let n = 100_000;
        let mut fresh = 0usize;
        for _ in 0..n {
            let d = act(&mut theta, &schedule, 0.4, 0, Some((&prev, 0)), &s, &mut rng).unwrap();
            assert_eq!(d.p_eff, 0.5);
            if d.fresh {
                fresh += 1;
            } else {
                assert_eq!(d.action, prev);
            }
            assert_eq!(d.base_logd, theta.log_density(&s, &d.action).unwrap());
        }
        let frac = fresh as f64 / n as f64;
        assert!((frac - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{frac}");
        // Exploration is scaled down while E = 2.
        assert!((theta.sigma()[0] - 0.4 / 2f64.sqrt()).abs() < 1e-15);

        for _ in 0..1000 {
            assert!(act(&mut theta, &schedule, 0.4, 0, None, &s, &mut rng).unwrap().fresh);
            let capped = act(&mut theta, &schedule, 0.4, 0, Some((&prev, 999)), &s, &mut rng).unwrap();
            assert!(capped.fresh && capped.p_eff == 1.0);
        }
    }

    #[test]
    fn update_matches_scalar_reimplementation() {
        let (w, c, sd, u, k) = (0.6, -0.2, 0.3, 1.5, 0.4);
        let (theta, nu) = linear(w, c, sd, u, k);
        let gamma = 0.95;
        let b = 3.0;
        let (s0, a0, r0, s1, r1, s2) = (0.5, 0.45, -0.3, 0.8, 0.2, 1.1);
        let (base0, base1) = (0.1, -0.4);
        let p_rec = 0.5;
        let traj = Trajectory::new(vec![
            tr(s0, a0, r0, s1, true, 1.0, base0, 0),
            tr(s1, a0, r1, s2, false, p_rec, base1, 1),
        ])
        .unwrap();
        let schedule = SustainSchedule::new(2.5, 1000.0, 4).unwrap();
        let t_now = 500;
        let cfg = AgentConfig {
            gamma,
            ..config(b)
        };
        let got = compute_update(&traj, &theta, &nu, &schedule, t_now, &cfg).unwrap();

        // Independent scalar arithmetic.
        let e = 2.5 - 1.5 * 0.5;
        let p_now = 1.0 / e;
        let mu0 = w * s0 + c;
        let logpi0 = -(sd as f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - (a0 - mu0).powi(2) / (2.0 * sd * sd);
        let is1 = (logpi0 - base0).exp();
        let is2 = is1 * (1.0 - p_now) / (1.0 - p_rec);
        let rho = |x: f64| b * (x / b).tanh();
        let v = |s: f64| u * s + k;
        let a1 = r0 + gamma * v(s1) - v(s0);
        let a2 = r0 + gamma * r1 + gamma * gamma * v(s2) - v(s0);
        let d = (a1 * rho(is1) + a2 * rho(is2)) / 2.0;
        let score = (a0 - mu0) / (sd * sd);
        let want_theta = [d * score * s0, d * score];
        let want_nu = [d * s0, d];
        for (g, w) in got.dtheta.iter().zip(want_theta).chain(got.dnu.iter().zip(want_nu)) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
        assert_eq!(got, compute_update(&traj, &theta, &nu, &schedule, t_now, &cfg).unwrap());
    }

    #[test]
    fn zero_advantage_gives_zero_update() {
        let (theta, nu) = linear(0.6, -0.2, 0.3, 0.0, 0.0);
        let traj = Trajectory::new(vec![tr(0.5, 0.1, 0.0, 0.9, true, 1.0, 0.3, 0)]).unwrap();
        let up = compute_update(&traj, &theta, &nu, &SustainSchedule::per_step(4), 0, &config(3.0)).unwrap();
        assert!(up.dtheta.iter().chain(&up.dnu).all(|x| *x == 0.0));
    }

    #[test]
    fn one_step_on_policy_is_actor_critic() {
        let (theta, nu) = linear(0.6, -0.2, 0.3, 1.5, 0.4);
        let (s, a) = (0.5, 0.2);
        let logd = theta.log_density(&[s], &[a]).unwrap();
        let traj = Trajectory::new(vec![tr(s, a, 0.7, 0.9, true, 1.0, logd, 0)]).unwrap();
        let cfg = AgentConfig { gamma: 0.9, ..config(1e8) };
        let up = compute_update(&traj, &theta, &nu, &SustainSchedule::per_step(4), 0, &cfg).unwrap();
        let a1 = 0.7 + 0.9 * nu.value(&[0.9]).unwrap() - nu.value(&[s]).unwrap();
        let g = theta.grad_log_density(&[s], &[a]).unwrap();
        for (x, y) in up.dtheta.iter().zip(&g) {
            assert!((x - y * a1).abs() < 1e-12);
        }
    }

    fn agent(batch: usize, learning_start: u64) -> Agent {
        let cfg = AgentConfig {
            batch,
            learning_start,
            hidden: vec![6],
            schedule: SustainSchedule::new(2.0, 100.0, 4).unwrap(),
            ..AgentConfig::default()
        };
        Agent::new(cfg, 1, 1, &mut crate::seeded_rng(9)).unwrap()
    }

    /// One four-step episode of a single sustained action: one eligible start.
    fn fill(agent: &mut Agent) {
        let a = 0.35;
        for k in 0..4 {
            let s = k as f64 * 0.1;
            let logd = agent.policy.log_density(&[s], &[a]).unwrap();
            let (fresh, p_eff) = if k == 0 { (true, 1.0) } else { (false, 0.5) };
            let mut t = tr(s, a, -0.1 * k as f64, s + 0.1, fresh, p_eff, logd, k);
            t.terminal = k == 3;
            t.t_global = k as u64;
            agent.observe(t).unwrap();
        }
    }

    #[test]
    fn no_update_before_learning_start() {
        let mut a = agent(2, 100);
        fill(&mut a);
        let before = (a.policy.clone(), a.critic.clone());
        assert!(a.train_step(&mut crate::seeded_rng(0)).unwrap().is_none());
        assert_eq!((a.policy.clone(), a.critic.clone()), before);
    }

    #[test]
    fn identical_trajectories_average_to_one() {
        let mut one = agent(1, 0);
        let mut many = agent(8, 0);
        fill(&mut one);
        fill(&mut many);
        assert_eq!(one.buffer.eligible_starts(4), 1);
        one.train_step(&mut crate::seeded_rng(0)).unwrap().unwrap();
        many.train_step(&mut crate::seeded_rng(0)).unwrap().unwrap();
        for (x, y) in one
            .policy
            .mean
            .params()
            .iter()
            .zip(many.policy.mean.params())
            .chain(one.critic.net.params().iter().zip(many.critic.net.params()))
        {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_duration_matches_acer_bitwise() {
        let mk = |algorithm| {
            let cfg = AgentConfig {
                algorithm,
                batch: 3,
                learning_start: 0,
                hidden: vec![6],
                schedule: SustainSchedule::new(1.0, 50.0, 4).unwrap(),
                ..AgentConfig::default()
            };
            Agent::new(cfg, 1, 1, &mut crate::seeded_rng(2)).unwrap()
        };
        let mut sus = mk(Algorithm::SusAcer);
        let mut acer = mk(Algorithm::Acer);
        let (mut r1, mut r2) = (crate::seeded_rng(4), crate::seeded_rng(4));
        let mut s = 0.3;
        let mut prev: Option<(Vec<f64>, usize)> = None;
        for k in 0..40u64 {
            let p = prev.as_ref().map(|(a, l)| (a.as_slice(), *l));
            let d1 = sus.act(&[s], p, &mut r1).unwrap();
            let d2 = acer.act(&[s], p, &mut r2).unwrap();
            assert_eq!(d1, d2);
            let mut t = tr(s, d1.action[0], -s.abs(), s * 0.9 + 0.1 * d1.action[0], true, d1.p_eff, d1.base_logd, 0);
            t.t_global = k;
            sus.observe(t.clone()).unwrap();
            acer.observe(t).unwrap();
            sus.train_step(&mut r1).unwrap();
            acer.train_step(&mut r2).unwrap();
            s = s * 0.9 + 0.1 * d1.action[0];
            prev = Some((d1.action, 0));
        }
        assert_eq!(sus.policy, acer.policy);
        assert_eq!(sus.critic, acer.critic);
        assert_eq!(sus.training_state_fingerprint(), acer.training_state_fingerprint());
    }
}
