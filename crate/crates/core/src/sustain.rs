//! The geometric sustain process and its annealing schedule.
//!
//! At every environment step the current action ends with probability `p_t`
//! and is otherwise repeated. The expected duration of an action, counting
//! the step on which it was chosen, is `E_t = 1 / p_t`. `E_t` decays linearly
//! from `E0` to 1 over `TE` steps, and a hard cap forces a fresh decision once
//! an action has lasted `cap` steps.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SustainSchedule {
    /// Expected action duration at step 0, in environment steps.
    pub e0: f64,
    /// Steps over which the expected duration decays to 1.
    pub te: f64,
    /// Maximum run length of a single action.
    pub cap: usize,
}

impl SustainSchedule {
    pub fn new(e0: f64, te: f64, cap: usize) -> Result<Self> {
        if !(e0.is_finite() && e0 >= 1.0) {
            return Err(Error::Config(format!("E0 must be >= 1, got {e0}")));
        }
        if !(te.is_finite() && te > 0.0) {
            return Err(Error::Config(format!("TE must be > 0, got {te}")));
        }
        if cap == 0 {
            return Err(Error::Config("sustain cap must be >= 1".into()));
        }
        Ok(Self { e0, te, cap })
    }

    /// Per-step control: every step is a fresh decision.
    pub fn per_step(cap: usize) -> Self {
        Self {
            e0: 1.0,
            te: 1.0,
            cap: cap.max(1),
        }
    }

    /// `E(t) = E0 + (1 - E0) * min(t / TE, 1)`.
    pub fn expected_duration(&self, t: u64) -> f64 {
        let frac = (t as f64 / self.te).min(1.0);
        if frac >= 1.0 {
            return 1.0;
        }
        self.e0 + (1.0 - self.e0) * frac
    }

    /// Termination probability `p(t) = 1 / E(t)`.
    pub fn p_at(&self, t: u64) -> f64 {
        let e = self.expected_duration(t);
        if e == 1.0 {
            1.0
        } else {
            1.0 / e
        }
    }

    /// Probability actually used at step `t` for an action that has already
    /// lasted `run_len` steps. Returns 1 on the last step the cap allows.
    pub fn effective_p(&self, t: u64, run_len: usize) -> Result<f64> {
        if run_len >= self.cap {
            return Err(Error::Contract(format!(
                "run_len {run_len} must be below the sustain cap {}",
                self.cap
            )));
        }
        if run_len + 1 == self.cap {
            Ok(1.0)
        } else {
            Ok(self.p_at(t))
        }
    }
}

/// Where the current action is in its sustain run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SustainState {
    /// Steps the current action has already been executed.
    pub run_len: usize,
    /// Whether the current step's action was drawn from the actor.
    pub fresh: bool,
}

impl SustainState {
    /// State after executing one step with the given freshness.
    pub fn advance(self, fresh: bool) -> Self {
        let run_len = if fresh { 0 } else { self.run_len + 1 };
        Self { run_len, fresh }
    }
}

/// Bernoulli draw with success probability `p_eff`. No randomness is consumed
/// when `p_eff >= 1`, so per-step control never touches the random stream.
pub fn should_terminate<R: rand::Rng + ?Sized>(rng: &mut R, p_eff: f64) -> bool {
    if p_eff >= 1.0 {
        return true;
    }
    rng.random::<f64>() < p_eff
}

/// Standard deviation that keeps state-space exploration constant when
/// actions last `e` steps on average: `sigma_base / sqrt(e)`.
pub fn sigma_scale(e: f64, sigma_base: f64) -> Result<f64> {
    if !(e >= 1.0) {
        return Err(Error::Contract(format!("expected duration must be >= 1, got {e}")));
    }
    if !(sigma_base > 0.0) {
        return Err(Error::Contract(format!("sigma_base must be > 0, got {sigma_base}")));
    }
    if e == 1.0 {
        return Ok(sigma_base);
    }
    Ok(sigma_base / e.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        let s = SustainSchedule::new(2.0, 1e5, 4).unwrap();
        assert_eq!(s.p_at(0), 0.5);

        let s = SustainSchedule::new(4.0, 1e5, 4).unwrap();
        assert!((s.expected_duration(50_000) - 2.5).abs() < 1e-12);
        assert!((s.p_at(50_000) - 0.4).abs() < 1e-12);

        let s = SustainSchedule::new(8.0, 3e5, 4).unwrap();
        for t in [300_000, 300_001, 10_000_000] {
            assert_eq!(s.expected_duration(t), 1.0);
            assert_eq!(s.p_at(t), 1.0);
        }
    }

    #[test]
    fn ablation_grid_is_valid() {
        for e0 in [2.0, 4.0, 8.0] {
            for te in [3e4, 1e5, 3e5] {
                let s = SustainSchedule::new(e0, te, 4).unwrap();
                assert_eq!(s.p_at(0), 1.0 / e0);
                assert_eq!(s.p_at(te as u64), 1.0);
            }
        }
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(SustainSchedule::new(0.5, 10.0, 4).is_err());
        assert!(SustainSchedule::new(2.0, 0.0, 4).is_err());
        assert!(SustainSchedule::new(2.0, 10.0, 0).is_err());
    }

    #[test]
    fn effective_p_cap_boundary() {
        let s = SustainSchedule::new(2.0, 1e9, 4).unwrap();
        assert_eq!(s.effective_p(0, 3).unwrap(), 1.0);
        assert_eq!(s.effective_p(0, 1).unwrap(), 0.5);
        assert!(matches!(s.effective_p(0, 4), Err(Error::Contract(_))));

        let one = SustainSchedule::new(8.0, 1e9, 1).unwrap();
        assert_eq!(one.effective_p(0, 0).unwrap(), 1.0);
    }

    #[test]
    fn terminate_always_at_one() {
        let mut rng = crate::seeded_rng(3);
        assert!((0..1000).all(|_| should_terminate(&mut rng, 1.0)));
    }

    #[test]
    fn terminate_is_seed_deterministic() {
        let a: Vec<bool> = {
            let mut rng = crate::seeded_rng(11);
            (0..200).map(|_| should_terminate(&mut rng, 0.3)).collect()
        };
        let mut rng = crate::seeded_rng(11);
        let b: Vec<bool> = (0..200).map(|_| should_terminate(&mut rng, 0.3)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sigma_scale_examples() {
        assert_eq!(sigma_scale(1.0, 0.4).unwrap(), 0.4);
        assert!((sigma_scale(4.0, 0.4).unwrap() - 0.2).abs() < 1e-15);
        assert!((sigma_scale(2.0, 1.0).unwrap() - 0.707_106_781_186_547_5).abs() < 1e-15);
        assert!(sigma_scale(0.9, 0.4).is_err());
        assert!(sigma_scale(2.0, 0.0).is_err());
    }

    #[test]
    fn advance_tracks_run_length() {
        let s = SustainState::default().advance(true);
        assert_eq!(s, SustainState { run_len: 0, fresh: true });
        let s = s.advance(false).advance(false);
        assert_eq!(s, SustainState { run_len: 2, fresh: false });
    }

    proptest! {
        #[test]
        fn p_times_e_is_one(e0 in 1.0f64..16.0, te in 1.0f64..1e6, t in 0u64..2_000_000) {
            let s = SustainSchedule::new(e0, te, 4).unwrap();
            let p = s.p_at(t);
            prop_assert!(p > 0.0 && p <= 1.0);
            prop_assert!((p * s.expected_duration(t) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn p_is_monotone(e0 in 1.0f64..16.0, te in 1.0f64..1e6, t in 0u64..2_000_000, dt in 0u64..100_000) {
            let s = SustainSchedule::new(e0, te, 4).unwrap();
            prop_assert!(s.p_at(t + dt) >= s.p_at(t));
            prop_assert!(s.expected_duration(t + dt) <= s.expected_duration(t));
        }

        #[test]
        fn scaled_variance_is_conserved(e in 1.0f64..64.0, base in 1e-3f64..10.0) {
            let sd = sigma_scale(e, base).unwrap();
            prop_assert!((sd * sd * e / (base * base) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn per_step_schedules_always_fresh(t in 0u64..1_000_000, cap in 1usize..8) {
            let s = SustainSchedule::per_step(cap);
            prop_assert_eq!(s.effective_p(t, 0).unwrap(), 1.0);
            let capped = SustainSchedule::new(4.0, 1e5, 1).unwrap();
            prop_assert_eq!(capped.effective_p(t, 0).unwrap(), 1.0);
        }
    }
}
