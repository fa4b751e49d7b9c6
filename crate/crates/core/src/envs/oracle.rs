//! A three-state, three-action MDP small enough to enumerate every trajectory.
//!
//! States and actions are encoded as one-element vectors holding their index.


use crate::acer::{LogDensity, StateValue};
use crate::{Error, Result};

pub const N_STATES: usize = 3;
pub const N_ACTIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMdp {
    /// `transition[s][a][s']`.
    pub transition: [[[f64; N_STATES]; N_ACTIONS]; N_STATES],
    /// `reward[s][a]`.
    pub reward: [[f64; N_ACTIONS]; N_STATES],
    pub initial: [f64; N_STATES],
}

impl Default for OracleMdp {
    fn default() -> Self {
        Self::standard()
    }
}

impl OracleMdp {
    pub fn standard() -> Self {
        Self {
            transition: [
                [[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4]],
                [[0.2, 0.5, 0.3], [0.5, 0.1, 0.4], [0.1, 0.1, 0.8]],
                [[0.4, 0.4, 0.2], [0.25, 0.25, 0.5], [0.6, 0.3, 0.1]],
            ],
            reward: [[1.0, 0.0, -0.5], [0.0, 2.0, 0.5], [-1.0, 0.5, 1.5]],
            initial: [0.5, 0.3, 0.2],
        }
    }

    pub fn n_states(&self) -> usize {
        N_STATES
    }

    pub fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    pub fn encode(index: usize) -> Vec<f64> {
        vec![index as f64]
    }

    pub fn decode(x: &[f64], n: usize) -> Result<usize> {
        match x {
            [v] if *v >= 0.0 && v.fract() == 0.0 && (*v as usize) < n => Ok(*v as usize),
            _ => Err(Error::Contract(format!("{x:?} is not a valid index below {n}"))),
        }
    }

    pub fn sample_next<R: rand::Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(&self.transition[s][a], rng)
    }

    pub fn sample_initial<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial, rng)
    }

    /// Discounted state values of `policy` by solving `(I - gamma P) V = R`.
    pub fn discounted_values(&self, policy: &TabularPolicy, gamma: f64) -> [f64; N_STATES] {
        let mut m = [[0.0; N_STATES + 1]; N_STATES];
        for s in 0..N_STATES {
            m[s][s] = 1.0;
            for a in 0..N_ACTIONS {
                let pa = policy.probs[s][a];
                m[s][N_STATES] += pa * self.reward[s][a];
                for s2 in 0..N_STATES {
                    m[s][s2] -= gamma * pa * self.transition[s][a][s2];
                }
            }
        }
        solve(m)
    }

    /// Expected undiscounted return over `horizon` steps, per start state.
    pub fn finite_horizon_values(&self, policy: &TabularPolicy, horizon: usize) -> [f64; N_STATES] {
        let mut v = [0.0; N_STATES];
        for _ in 0..horizon {
            let mut next = [0.0; N_STATES];
            for (s, out) in next.iter_mut().enumerate() {
                for a in 0..N_ACTIONS {
                    let cont: f64 = (0..N_STATES).map(|s2| self.transition[s][a][s2] * v[s2]).sum();
                    *out += policy.probs[s][a] * (self.reward[s][a] + cont);
                }
            }
            v = next;
        }
        v
    }
}

fn sample_categorical<R: rand::Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Gauss-Jordan elimination with partial pivoting on an augmented 3x4 system.
fn solve(mut m: [[f64; N_STATES + 1]; N_STATES]) -> [f64; N_STATES] {
    for col in 0..N_STATES {
        let pivot = (col..N_STATES)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty range");
        m.swap(col, pivot);
        let d = m[col][col];
        for x in &mut m[col] {
            *x /= d;
        }
        for row in 0..N_STATES {
            if row != col {
                let f = m[row][col];
                let pivot_row = m[col];
                for (x, p) in m[row].iter_mut().zip(pivot_row) {
                    *x -= f * p;
                }
            }
        }
    }
    [m[0][N_STATES], m[1][N_STATES], m[2][N_STATES]]
}

/// Tabular base policy `pi_a(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub probs: [[f64; N_ACTIONS]; N_STATES],
}

impl TabularPolicy {
    pub fn new(probs: [[f64; N_ACTIONS]; N_STATES]) -> Result<Self> {
        for row in &probs {
            if row.iter().any(|p| *p <= 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Contract(format!("invalid action distribution {row:?}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(&self.probs[s], rng)
    }
}

impl LogDensity for TabularPolicy {
    fn log_density(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let s = OracleMdp::decode(s, N_STATES)?;
        let a = OracleMdp::decode(a, N_ACTIONS)?;
        Ok(self.probs[s][a].ln())
    }
}

/// Lookup-table critic over the oracle's encoded states.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularValue(pub [f64; N_STATES]);

impl StateValue for TabularValue {
    fn value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.0[OracleMdp::decode(s, N_STATES)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniformish() -> TabularPolicy {
        TabularPolicy::new([[0.5, 0.3, 0.2], [0.2, 0.2, 0.6], [0.1, 0.7, 0.2]]).unwrap()
    }

    #[test]
    fn tables_are_distributions() {
        let mdp = OracleMdp::standard();
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                assert!((mdp.transition[s][a].iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
        assert!((mdp.initial.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn discounted_values_satisfy_bellman() {
        let mdp = OracleMdp::standard();
        let pi = uniformish();
        let v = mdp.discounted_values(&pi, 0.9);
        for s in 0..N_STATES {
            let rhs: f64 = (0..N_ACTIONS)
                .map(|a| {
                    let next: f64 = (0..N_STATES).map(|s2| mdp.transition[s][a][s2] * v[s2]).sum();
                    pi.probs[s][a] * (mdp.reward[s][a] + 0.9 * next)
                })
                .sum();
            assert!((v[s] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_horizon_value_matches_monte_carlo() {
        let mdp = OracleMdp::standard();
        let pi = uniformish();
        let horizon = 5;
        let exact = mdp.finite_horizon_values(&pi, horizon);
        let mut rng = crate::seeded_rng(31);
        let n = 100_000;
        for (s0, v) in exact.iter().enumerate() {
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..n {
                let mut s = s0;
                let mut g = 0.0;
                for _ in 0..horizon {
                    let a = pi.sample(s, &mut rng);
                    g += mdp.reward[s][a];
                    s = mdp.sample_next(s, a, &mut rng);
                }
                sum += g;
                sq += g * g;
            }
            let mean = sum / n as f64;
            let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - v).abs() < 3.0 * se, "s0={s0}: {mean} vs {v} (se {se})");
        }
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(OracleMdp::decode(&[3.0], 3).is_err());
        assert!(OracleMdp::decode(&[0.5], 3).is_err());
        assert!(OracleMdp::decode(&[], 3).is_err());
        assert_eq!(OracleMdp::decode(&[2.0], 3).unwrap(), 2);
        assert!(TabularPolicy::new([[0.5, 0.5, 0.0], [1.0 / 3.0; 3], [1.0 / 3.0; 3]]).is_err());
    }
}
