//! Independent oracles for the math the learner relies on.
//!
//! Nothing here reuses the learner's code path for the quantity being checked:
//! importance weights are compared against brute-force trajectory
//! probabilities, gradients against central differences of the forward pass,
//! sustain statistics against the analytic truncated-geometric law, and the
//! exploration scaling against a Monte Carlo double integrator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::acer::{soft_truncate, trajectory_is};
use crate::approximator::{Mlp, PolicyParams, ValueParams};
use crate::envs::{OracleMdp, TabularPolicy};
use crate::replay::{Trajectory, Transition};
use crate::sustain::{self, SustainSchedule};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Numerical helpers
// ---------------------------------------------------------------------------

/// Central-difference gradient of `f` at `x`.
pub fn central_difference(x: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `max |a - b| / max(max |a|, max |b|)`, 0 when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

// ---------------------------------------------------------------------------
// Sustain run lengths
// ---------------------------------------------------------------------------

/// Run-length pmf over `1..=cap` when each step ends the action with
/// probability `p` and the cap forces an end at `cap`.
pub fn truncated_geometric_pmf(p: f64, cap: usize) -> Vec<f64> {
    (1..=cap)
        .map(|l| {
            let survive = (1.0 - p).powi(l as i32 - 1);
            if l == cap {
                survive
            } else {
                survive * p
            }
        })
        .collect()
}

pub fn truncated_geometric_mean(p: f64, cap: usize) -> f64 {
    truncated_geometric_pmf(p, cap)
        .iter()
        .enumerate()
        .map(|(i, q)| (i + 1) as f64 * q)
        .sum()
}

/// Simulated run lengths under a constant-`p` schedule through the same
/// `effective_p` / `should_terminate` path as action selection. Returns
/// `(mean, standard error, histogram)`; `cap = None` means uncapped.
pub fn simulate_run_lengths(p: f64, cap: Option<usize>, samples: usize, seed: u64) -> Result<(f64, f64, Vec<usize>)> {
    let cap_len = cap.unwrap_or(usize::MAX);
    let schedule = SustainSchedule::new(1.0 / p, f64::MAX, cap_len)?;
    let mut rng = crate::seeded_rng(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut hist = vec![0usize; cap.unwrap_or(0) + 1];
    for _ in 0..samples {
        let mut run_len = 0usize;
        loop {
            let p_eff = schedule.effective_p(0, run_len)?;
            if sustain::should_terminate(&mut rng, p_eff) {
                break;
            }
            run_len += 1;
        }
        let l = (run_len + 1) as f64;
        sum += l;
        sq += l * l;
        if let Some(slot) = hist.get_mut(run_len + 1) {
            *slot += 1;
        }
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt(), hist))
}

// ---------------------------------------------------------------------------
// Brute-force importance sampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationRow {
    pub behavior_prob: f64,
    pub target_prob: f64,
    pub exact_ratio: f64,
    pub is_value: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub horizon: usize,
    pub p_behavior: f64,
    pub p_target: f64,
    pub rows: Vec<EnumerationRow>,
    pub max_abs_error: f64,
    pub sum_behavior: f64,
    pub sum_target: f64,
    /// `sum P_behavior * IS`, which must equal 1.
    pub expected_is: f64,
    /// Largest gap between the per-step mixture probability of an observable
    /// trajectory and the sum over its sustain/fresh explanations. Only
    /// computed when the cap does not bind within the horizon.
    pub mixture_max_error: Option<f64>,
}

/// One step's latent event in the enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Event {
    Sustain,
    Fresh(usize),
}

struct Process<'a> {
    pi: &'a TabularPolicy,
    p: f64,
}

impl Process<'_> {
    fn p_eff(&self, prev_run_len: usize, cap: usize) -> f64 {
        if prev_run_len + 1 == cap {
            1.0
        } else {
            self.p
        }
    }

    fn event_prob(&self, ev: Event, s: usize, prev_run_len: usize, cap: usize) -> f64 {
        let p = self.p_eff(prev_run_len, cap);
        match ev {
            Event::Sustain => 1.0 - p,
            Event::Fresh(a) => p * self.pi.prob(s, a),
        }
    }

    /// Environment-level mixture probability of observing `a` after `a_prev`.
    fn mixture_prob(&self, s: usize, a: usize, a_prev: usize) -> f64 {
        let stay = if a == a_prev { 1.0 - self.p } else { 0.0 };
        stay + self.p * self.pi.prob(s, a)
    }
}

/// Enumerates every environment-level trajectory of `horizon` steps that
/// starts with a fresh action, and compares the exact probability ratio
/// between target and behavior processes with [`trajectory_is`].
pub fn brute_force_is_check(
    mdp: &OracleMdp,
    pi_behavior: &TabularPolicy,
    p_behavior: f64,
    pi_target: &TabularPolicy,
    p_target: f64,
    horizon: usize,
    cap: usize,
) -> Result<EnumerationReport> {
    if !(p_behavior > 0.0 && p_behavior <= 1.0 && p_target > 0.0 && p_target <= 1.0) {
        return Err(Error::Contract("termination probabilities must lie in (0, 1]".into()));
    }
    if horizon == 0 || cap == 0 {
        return Err(Error::Contract("horizon and cap must be >= 1".into()));
    }
    let behavior = Process { pi: pi_behavior, p: p_behavior };
    let target = Process { pi: pi_target, p: p_target };
    let schedule = SustainSchedule::new(1.0 / p_target, f64::MAX, cap)?;

    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let mut events = vec![Event::Sustain];
    events.extend((0..na).map(Event::Fresh));

    let mut rows = Vec::new();
    let mut observable: HashMap<(Vec<usize>, Vec<usize>, usize), (f64, f64)> = HashMap::new();
    let (mut sum_b, mut sum_t, mut expected_is, mut max_err) = (0.0, 0.0, 0.0, 0.0f64);

    // Odometer over (s0, a0, [s_k, event_k] for k = 1..horizon, s_horizon).
    let digits: Vec<usize> = std::iter::once(ns)
        .chain(std::iter::once(na))
        .chain((1..horizon).flat_map(|_| [ns, events.len()]))
        .chain(std::iter::once(ns))
        .collect();
    let mut idx = vec![0usize; digits.len()];
    'outer: loop {
        let s0 = idx[0];
        let a0 = idx[1];
        let mut states = vec![s0];
        let mut actions = vec![a0];
        let mut latent = vec![Event::Fresh(a0)];
        let mut run_lens = vec![0usize];
        let mut pb = Dd::from(mdp.initial[s0]).mul(pi_behavior.prob(s0, a0));
        let mut pt = Dd::from(mdp.initial[s0]).mul(pi_target.prob(s0, a0));
        let mut feasible = true;
        for k in 1..horizon {
            let s = idx[2 * k];
            let ev = events[idx[2 * k + 1]];
            let (sp, ap) = (states[k - 1], actions[k - 1]);
            let trans = mdp.transition[sp][ap][s];
            let prev_run = run_lens[k - 1];
            let pb_ev = behavior.event_prob(ev, s, prev_run, cap);
            if pb_ev == 0.0 {
                feasible = false;
                break;
            }
            pb = pb.mul(trans).mul(pb_ev);
            pt = pt.mul(trans).mul(target.event_prob(ev, s, prev_run, cap));
            let (a, run) = match ev {
                Event::Sustain => (ap, prev_run + 1),
                Event::Fresh(a) => (a, 0),
            };
            states.push(s);
            actions.push(a);
            latent.push(ev);
            run_lens.push(run);
        }
        if feasible {
            let s_last = idx[digits.len() - 1];
            let trans = mdp.transition[states[horizon - 1]][actions[horizon - 1]][s_last];
            let exact = pt.mul(trans).div(pb.mul(trans));
            let (pb, pt) = (pb.mul(trans).hi, pt.mul(trans).hi);

            let steps: Vec<Transition> = (0..horizon)
                .map(|k| {
                    let s_next = if k + 1 < horizon { states[k + 1] } else { s_last };
                    let fresh = matches!(latent[k], Event::Fresh(_));
                    Transition {
                        s: OracleMdp::encode(states[k]),
                        a: OracleMdp::encode(actions[k]),
                        r: mdp.reward[states[k]][actions[k]],
                        s_next: OracleMdp::encode(s_next),
                        terminal: false,
                        truncated: false,
                        fresh,
                        p_eff: if k == 0 { 1.0 } else { behavior.p_eff(run_lens[k - 1], cap) },
                        base_logd: pi_behavior.prob(states[k], actions[k]).ln(),
                        run_len: run_lens[k],
                        t_global: k as u64,
                    }
                })
                .collect();
            let traj = Trajectory::new(steps)?;
            let is = *trajectory_is(&traj, pi_target, &schedule, 0)?.last().expect("non-empty");
            let err = (exact - is).abs();
            max_err = max_err.max(err);
            sum_b += pb;
            sum_t += pt;
            expected_is += pb * is;
            let entry = observable.entry((states.clone(), actions.clone(), s_last)).or_insert((0.0, 0.0));
            entry.0 += pb;
            entry.1 += pt;
            rows.push(EnumerationRow {
                behavior_prob: pb,
                target_prob: pt,
                exact_ratio: exact,
                is_value: is,
                abs_error: err,
            });
        }

        // Advance the odometer.
        for d in (0..digits.len()).rev() {
            idx[d] += 1;
            if idx[d] < digits[d] {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }

    let mixture_max_error = (cap >= horizon).then(|| {
        observable
            .iter()
            .map(|((states, actions, s_last), (pb, pt))| {
                let mix = |proc_: &Process| {
                    let mut p = mdp.initial[states[0]] * proc_.pi.prob(states[0], actions[0]);
                    for k in 1..states.len() {
                        p *= mdp.transition[states[k - 1]][actions[k - 1]][states[k]];
                        p *= proc_.mixture_prob(states[k], actions[k], actions[k - 1]);
                    }
                    p * mdp.transition[states[states.len() - 1]][actions[actions.len() - 1]][*s_last]
                };
                (mix(&behavior) - pb).abs().max((mix(&target) - pt).abs())
            })
            .fold(0.0, f64::max)
    });

    Ok(EnumerationReport {
        horizon,
        p_behavior,
        p_target,
        rows,
        max_abs_error: max_err,
        sum_behavior: sum_b,
        sum_target: sum_t,
        expected_is,
        mixture_max_error,
    })
}

/// Double-double accumulator so the reference ratio carries no rounding of
/// its own beyond the f64 inputs.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl Dd {
    fn mul(self, b: f64) -> Self {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p) + self.lo * b;
        let hi = p + e;
        Self { hi, lo: e - (hi - p) }
    }

    fn div(self, d: Self) -> f64 {
        let q = self.hi / d.hi;
        let r = (-q).mul_add(d.hi, self.hi) + self.lo - q * d.lo;
        q + r / d.hi
    }
}

/// Behavior and target base policies used by the IS grid check.
pub fn oracle_policies() -> (TabularPolicy, TabularPolicy) {
    let behavior = TabularPolicy::new([[0.5, 0.3, 0.2], [0.2, 0.2, 0.6], [0.1, 0.7, 0.2]]).expect("valid");
    let target = TabularPolicy::new([[0.3, 0.3, 0.4], [0.25, 0.45, 0.3], [0.2, 0.5, 0.3]]).expect("valid");
    (behavior, target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsGridSummary {
    pub cases: usize,
    pub trajectories: usize,
    pub max_abs_error: f64,
    pub max_normalization_error: f64,
    pub max_expected_is_error: f64,
    pub max_mixture_error: f64,
}

/// Runs [`brute_force_is_check`] for horizons `1..=max_horizon` over
/// `(p_behavior, p_target)` in `{0.25, 0.5, 0.75, 1}^2` with `p_behavior < 1`.
pub fn is_grid_check(max_horizon: usize, cap: usize) -> Result<IsGridSummary> {
    let mdp = OracleMdp::standard();
    let (pb, pt) = oracle_policies();
    let grid = [0.25, 0.5, 0.75, 1.0];
    let mut out = IsGridSummary {
        cases: 0,
        trajectories: 0,
        max_abs_error: 0.0,
        max_normalization_error: 0.0,
        max_expected_is_error: 0.0,
        max_mixture_error: 0.0,
    };
    for horizon in 1..=max_horizon {
        for &p_b in grid.iter().filter(|p| **p < 1.0) {
            for &p_t in &grid {
                let r = brute_force_is_check(&mdp, &pb, p_b, &pt, p_t, horizon, cap)?;
                out.cases += 1;
                out.trajectories += r.rows.len();
                out.max_abs_error = out.max_abs_error.max(r.max_abs_error);
                out.max_normalization_error = out
                    .max_normalization_error
                    .max((r.sum_behavior - 1.0).abs())
                    .max((r.sum_target - 1.0).abs());
                out.max_expected_is_error = out.max_expected_is_error.max((r.expected_is - 1.0).abs());
                if let Some(m) = r.mixture_max_error {
                    out.max_mixture_error = out.max_mixture_error.max(m);
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exploration variance on a double integrator
// ---------------------------------------------------------------------------

/// How long each sustained action lasts in the variance experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DurationModel {
    /// Every action lasts exactly `E` steps.
    Fixed,
    /// Each step ends the action with probability `1 / E` (uncapped).
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub e: f64,
    pub sigma: f64,
    pub var_position: f64,
    pub var_velocity: f64,
}

/// Variance of the displacement of a 1-D double integrator (`x'' = a`,
/// semi-implicit Euler at step `h`) over `horizon` steps, under zero-mean
/// Gaussian actions sustained for expected duration `E`.
pub fn variance_conservation_check(
    e_values: &[f64],
    sigma_base: f64,
    horizon: usize,
    h: f64,
    trials: usize,
    scaling: bool,
    durations: DurationModel,
    seed: u64,
) -> Result<Vec<VarianceRow>> {
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    let mut rows = Vec::with_capacity(e_values.len());
    for (i, &e) in e_values.iter().enumerate() {
        let sigma = if scaling { sustain::sigma_scale(e, sigma_base)? } else { sigma_base };
        if durations == DurationModel::Fixed && (e.fract() != 0.0 || e < 1.0) {
            return Err(Error::Contract(format!("fixed durations need an integer E >= 1, got {e}")));
        }
        let p = 1.0 / e;
        let mut rng = crate::seeded_rng(seed.wrapping_add(i as u64));
        let (mut sx, mut sxx, mut sv, mut svv) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..trials {
            let (mut x, mut v) = (0.0f64, 0.0f64);
            let mut a = 0.0;
            let mut left = 0usize;
            for _ in 0..horizon {
                let fresh = match durations {
                    DurationModel::Fixed => left == 0,
                    DurationModel::Geometric => left == 0 || rng.random::<f64>() < p,
                };
                if fresh {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a = sigma * z;
                    left = e as usize;
                }
                left = left.saturating_sub(1).max(usize::from(durations == DurationModel::Geometric));
                v += h * a;
                x += h * v;
            }
            sx += x;
            sxx += x * x;
            sv += v;
            svv += v * v;
        }
        let n = trials as f64;
        rows.push(VarianceRow {
            e,
            sigma,
            var_position: sxx / n - (sx / n).powi(2),
            var_velocity: svv / n - (sv / n).powi(2),
        });
    }
    Ok(rows)
}

/// Exact `E[sum_j L_j^2]` for geometric runs (end probability `p`) tiling
/// `horizon` steps, the last run clipped at the horizon. The velocity
/// displacement variance is `h^2 sigma^2` times this.
pub fn geometric_run_square_sum(p: f64, horizon: usize) -> f64 {
    let mut f = vec![0.0; horizon + 1];
    for k in 1..=horizon {
        let mut acc = 0.0;
        for l in 1..k {
            let q = p * (1.0 - p).powi(l as i32 - 1);
            acc += q * ((l * l) as f64 + f[k - l]);
        }
        acc += (1.0 - p).powi(k as i32 - 1) * (k * k) as f64;
        f[k] = acc;
    }
    f[horizon]
}

// ---------------------------------------------------------------------------
// Gradient suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub configurations: usize,
    pub max_actor_error: f64,
    pub max_critic_error: f64,
}

impl GradientReport {
    pub fn max_error(&self) -> f64 {
        self.max_actor_error.max(self.max_critic_error)
    }
}

pub type ActorGrad<'a> = &'a dyn Fn(&PolicyParams, &[f64], &[f64]) -> Result<Vec<f64>>;
pub type CriticGrad<'a> = &'a dyn Fn(&ValueParams, &[f64]) -> Result<Vec<f64>>;

/// Checks the analytic actor and critic gradients against central differences
/// at step 1e-5 on `configurations` random networks, states and actions.
pub fn gradient_suite(seed: u64, configurations: usize) -> Result<GradientReport> {
    gradient_suite_with(
        seed,
        configurations,
        &|p: &PolicyParams, s: &[f64], a: &[f64]| p.grad_log_density(s, a),
        &|v: &ValueParams, s: &[f64]| v.grad_value(s),
    )
}

/// [`gradient_suite`] with injectable gradient implementations.
pub fn gradient_suite_with(
    seed: u64,
    configurations: usize,
    actor_grad: ActorGrad<'_>,
    critic_grad: CriticGrad<'_>,
) -> Result<GradientReport> {
    use rand::Rng as _;

    let mut rng = crate::seeded_rng(seed);
    let mut report = GradientReport {
        configurations,
        max_actor_error: 0.0,
        max_critic_error: 0.0,
    };
    for _ in 0..configurations {
        let state_dim = rng.random_range(1..=5);
        let action_dim = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=12)).collect();
        let mut sizes = vec![state_dim];
        sizes.extend(&hidden);

        // Generic weights: unscaled uniform so tanh is well inside its nonlinear range.
        let mut generic = |out: usize| -> Result<Mlp> {
            let mut s = sizes.clone();
            s.push(out);
            let params = (0..Mlp::param_count(&s)).map(|_| rng.random_range(-1.0..1.0)).collect();
            Mlp::from_params(&s, params)
        };
        let mean = generic(action_dim)?;
        let critic_net = generic(1)?;
        let sigma: Vec<f64> = (0..action_dim).map(|_| rng.random_range(0.2..1.0)).collect();
        let policy = PolicyParams::new(mean, sigma)?;
        let critic = ValueParams::new(critic_net)?;
        let s: Vec<f64> = (0..state_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..action_dim).map(|_| rng.random_range(-1.5..1.5)).collect();

        let analytic = actor_grad(&policy, &s, &a)?;
        let numeric = central_difference(policy.mean.params(), 1e-5, |theta| {
            let mut q = policy.clone();
            q.mean.params_mut().copy_from_slice(theta);
            q.log_density(&s, &a).expect("shapes fixed")
        });
        report.max_actor_error = report.max_actor_error.max(relative_error(&analytic, &numeric));

        let analytic = critic_grad(&critic, &s)?;
        let numeric = central_difference(critic.net.params(), 1e-5, |nu| {
            let mut w = critic.clone();
            w.net.params_mut().copy_from_slice(nu);
            w.value(&s).expect("shapes fixed")
        });
        report.max_critic_error = report.max_critic_error.max(relative_error(&analytic, &numeric));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<28} {:<6} {:>14} {:>14}  detail\n", "check", "result", "value", "threshold");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<28} {:<6} {:>14.6e} {:>14.6e}  {}\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.value,
                c.threshold,
                c.detail
            ));
        }
        out
    }
}

fn check(name: &str, value: f64, threshold: f64, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        value,
        threshold,
        detail,
    }
}

/// Runs every oracle at its acceptance setting.
pub fn run_all(seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();

    let grid = is_grid_check(4, 4)?;
    checks.push(check(
        "is_exactness",
        grid.max_abs_error,
        1e-12,
        grid.max_abs_error < 1e-12,
        format!("{} cases, {} trajectories", grid.cases, grid.trajectories),
    ));
    let capped = is_grid_check(4, 2)?;
    checks.push(check(
        "is_exactness_cap2",
        capped.max_abs_error,
        1e-12,
        capped.max_abs_error < 1e-12,
        format!("{} trajectories with the cap binding", capped.trajectories),
    ));
    let norm = grid.max_normalization_error.max(grid.max_expected_is_error);
    checks.push(check(
        "is_normalization",
        norm,
        1e-12,
        norm < 1e-12,
        "probabilities and E_behavior[IS] sum to 1".into(),
    ));
    checks.push(check(
        "mixture_consistency",
        grid.max_mixture_error,
        1e-12,
        grid.max_mixture_error < 1e-12,
        "per-step mixture vs summed sustain/fresh explanations".into(),
    ));

    for (p, cap) in [(0.25, None), (0.5, Some(4))] {
        let (mean, se, _) = simulate_run_lengths(p, cap, 100_000, seed)?;
        let expect = match cap {
            Some(c) => truncated_geometric_mean(p, c),
            None => 1.0 / p,
        };
        let z = (mean - expect).abs() / se;
        checks.push(check(
            &format!("sustain_mean_p{p}_{}", cap.map_or("uncapped".into(), |c| format!("cap{c}"))),
            z,
            3.0,
            z < 3.0,
            format!("mean {mean:.5} vs {expect:.5} (se {se:.5})"),
        ));
    }

    let es = [1.0, 2.0, 4.0, 8.0];
    let on = variance_conservation_check(&es, 0.4, 64, 0.01, 100_000, true, DurationModel::Fixed, seed)?;
    let off = variance_conservation_check(&es, 0.4, 64, 0.01, 100_000, false, DurationModel::Fixed, seed)?;
    let base = on[0].var_position;
    let worst = on[1..]
        .iter()
        .map(|r| (r.var_position / base - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(check(
        "variance_scaling_on",
        worst,
        0.25,
        worst <= 0.25,
        format!(
            "ratios {}",
            on.iter().map(|r| format!("{:.3}", r.var_position / base)).collect::<Vec<_>>().join(", ")
        ),
    ));
    let off_ratio = off[3].var_position / off[0].var_position;
    checks.push(check(
        "variance_scaling_off",
        off_ratio,
        4.0,
        off_ratio >= 4.0,
        "E = 8 vs E = 1 without scaling".into(),
    ));

    let grads = gradient_suite(seed, 100)?;
    checks.push(check(
        "gradients",
        grads.max_error(),
        1e-4,
        grads.max_error() < 1e-4,
        format!(
            "actor {:.2e}, critic {:.2e}",
            grads.max_actor_error, grads.max_critic_error
        ),
    ));

    let psi = soft_truncate(3.0, 3.0);
    let err = (psi - 3.0 * 1f64.tanh()).abs();
    checks.push(check("soft_truncation", err, 1e-12, err < 1e-12, format!("psi_3(3) = {psi:.12}")));

    Ok(VerifyReport { checks })
}
