use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Mlp, MlpCache};
use crate::error::check_dim;
use crate::{Error, Result};

/// `ln(sqrt(2 pi))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian actor: `a ~ N(mu(s; theta), diag(sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub mean: Mlp,
    sigma: Vec<f64>,
}

impl PolicyParams {
    pub fn new(mean: Mlp, sigma: Vec<f64>) -> Result<Self> {
        check_dim("policy sigma", mean.output_dim(), sigma.len())?;
        let mut p = Self { mean, sigma: Vec::new() };
        p.set_sigma(&sigma)?;
        Ok(p)
    }

    /// Actor with hidden widths `hidden`, standard deviation `sigma` on every
    /// action dimension.
    pub fn init<R: rand::Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = layer_sizes(state_dim, hidden, action_dim);
        Self::new(Mlp::init(&sizes, rng)?, vec![sigma; action_dim])
    }

    pub fn action_dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn state_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn set_sigma(&mut self, sigma: &[f64]) -> Result<()> {
        check_dim("policy sigma", self.mean.output_dim(), sigma.len())?;
        if let Some(bad) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Contract(format!("sigma entries must be > 0, got {bad}")));
        }
        self.sigma.clear();
        self.sigma.extend_from_slice(sigma);
        Ok(())
    }

    /// Same standard deviation on every dimension.
    pub fn set_sigma_uniform(&mut self, sd: f64) -> Result<()> {
        let v = vec![sd; self.sigma.len()];
        self.set_sigma(&v)
    }

    pub fn mu(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(s)
    }

    pub fn log_density(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let mu = self.mu(s)?;
        self.log_density_at_mean(&mu, a)
    }

    /// Log density of `a` for a precomputed mean.
    pub fn log_density_at_mean(&self, mu: &[f64], a: &[f64]) -> Result<f64> {
        check_dim("action", self.sigma.len(), a.len())?;
        Ok(mu
            .iter()
            .zip(a)
            .zip(&self.sigma)
            .map(|((m, x), sd)| {
                let z = (x - m) / sd;
                -sd.ln() - LN_SQRT_2PI - 0.5 * z * z
            })
            .sum())
    }

    pub fn sample_action<R: rand::Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.sample_with_log_density(s, rng)?.0)
    }

    /// Draws an action and returns it with its log density, sharing one
    /// forward pass.
    pub fn sample_with_log_density<R: rand::Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mu = self.mu(s)?;
        let mut a = mu.clone();
        for (x, sd) in a.iter_mut().zip(&self.sigma) {
            let z: f64 = StandardNormal.sample(rng);
            *x += sd * z;
        }
        let logd = self.log_density_at_mean(&mu, &a)?;
        Ok((a, logd))
    }

    /// Gradient of `log pi(a|s)` with respect to the mean network parameters.
    pub fn grad_log_density(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.mean.params().len()];
        self.add_grad_log_density(s, a, 1.0, &mut g)?;
        Ok(g)
    }

    /// `grad += scale * d log pi(a|s) / d theta`.
    pub fn add_grad_log_density(&self, s: &[f64], a: &[f64], scale: f64, grad: &mut [f64]) -> Result<()> {
        check_dim("action", self.sigma.len(), a.len())?;
        let mut cache = MlpCache::default();
        self.mean.forward_cached(s, &mut cache)?;
        let out_grad: Vec<f64> = cache
            .output()
            .iter()
            .zip(a)
            .zip(&self.sigma)
            .map(|((m, x), sd)| scale * (x - m) / (sd * sd))
            .collect();
        self.mean.backward(&cache, &out_grad, grad)
    }
}

/// Critic: scalar `V(s; nu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParams {
    pub net: Mlp,
}

impl ValueParams {
    pub fn new(net: Mlp) -> Result<Self> {
        check_dim("critic output", 1, net.output_dim())?;
        Ok(Self { net })
    }

    pub fn init<R: rand::Rng + ?Sized>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Self::new(Mlp::init(&layer_sizes(state_dim, hidden, 1), rng)?)
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.net.forward(s)?[0])
    }

    pub fn grad_value(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.net.params().len()];
        self.add_grad_value(s, 1.0, &mut g)?;
        Ok(g)
    }

    /// `grad += scale * dV(s) / d nu`.
    pub fn add_grad_value(&self, s: &[f64], scale: f64, grad: &mut [f64]) -> Result<()> {
        let mut cache = MlpCache::default();
        self.net.forward_cached(s, &mut cache)?;
        self.net.backward(&cache, &[scale], grad)
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{central_difference, relative_error};

    fn linear_policy(w: Vec<f64>, sd: f64) -> PolicyParams {
        // 2 inputs -> 1 output, no hidden layer.
        PolicyParams::new(Mlp::from_params(&[2, 1], w).unwrap(), vec![sd]).unwrap()
    }

    #[test]
    fn log_density_at_mean() {
        let p = linear_policy(vec![0.3, -0.2, 0.1], 0.4);
        let s = [1.0, 2.0];
        let mu = p.mu(&s).unwrap()[0];
        let at_mean = p.log_density(&s, &[mu]).unwrap();
        assert!((at_mean - (-0.4f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-15);
        assert!((at_mean - (-0.002_647_8)).abs() < 5e-8);
        let one_sd = p.log_density(&s, &[mu + 0.4]).unwrap();
        assert!((one_sd - (at_mean - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn log_density_factorizes() {
        let mean = Mlp::from_params(&[1, 2], vec![0.5, -1.0, 0.1, 0.2]).unwrap();
        let p2 = PolicyParams::new(mean, vec![0.4, 0.7]).unwrap();
        let s = [0.8];
        let a = [0.3, -0.9];
        let mu = p2.mu(&s).unwrap();
        let one_d = |m: f64, x: f64, sd: f64| {
            let one = PolicyParams::new(Mlp::from_params(&[1, 1], vec![0.0, m]).unwrap(), vec![sd]).unwrap();
            one.log_density(&[0.0], &[x]).unwrap()
        };
        let sum = one_d(mu[0], a[0], 0.4) + one_d(mu[1], a[1], 0.7);
        assert!((p2.log_density(&s, &a).unwrap() - sum).abs() < 1e-12);
    }

    #[test]
    fn sigma_must_be_positive() {
        let mut p = linear_policy(vec![0.0; 3], 0.4);
        assert!(matches!(p.set_sigma(&[0.0]), Err(Error::Contract(_))));
        assert!(matches!(p.set_sigma(&[-1.0]), Err(Error::Contract(_))));
        assert!(PolicyParams::new(Mlp::zeros(&[2, 1]).unwrap(), vec![0.4, 0.4]).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        // Trapezoid rule over mu +- 12 sigma.
        let p = linear_policy(vec![0.7, 0.1, -0.3], 0.4);
        let s = [0.5, 1.5];
        let mu = p.mu(&s).unwrap()[0];
        let (lo, hi, n) = (mu - 12.0 * 0.4, mu + 12.0 * 0.4, 20_000);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| p.log_density(&s, &[x]).unwrap().exp();
        let mut total = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            total += f(lo + i as f64 * h);
        }
        assert!((total * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn density_peaks_at_mean_regardless_of_sigma() {
        let mut p = linear_policy(vec![0.7, 0.1, -0.3], 0.4);
        let s = [0.5, 1.5];
        let mu = p.mu(&s).unwrap()[0];
        for sd in [0.1, 0.4, 2.0] {
            p.set_sigma(&[sd]).unwrap();
            let peak = p.log_density(&s, &[mu]).unwrap();
            for da in [-0.1, -1e-3, 1e-3, 0.1] {
                assert!(p.log_density(&s, &[mu + da]).unwrap() < peak);
            }
        }
    }

    #[test]
    fn sampling_moments() {
        let p = PolicyParams::new(Mlp::from_params(&[1, 2], vec![1.0, -2.0, 0.5, 0.0]).unwrap(), vec![0.4, 0.9])
            .unwrap();
        let s = [1.0];
        let mu = p.mu(&s).unwrap();
        let mut rng = crate::seeded_rng(21);
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let a = p.sample_action(&s, &mut rng).unwrap();
            for i in 0..2 {
                sum[i] += a[i];
                sq[i] += (a[i] - mu[i]).powi(2);
            }
        }
        for i in 0..2 {
            let sd = p.sigma()[i];
            let mean = sum[i] / n as f64;
            assert!((mean - mu[i]).abs() < 4.0 * sd / (n as f64).sqrt());
            // Var of the sample variance of a Gaussian is 2 sigma^4 / n.
            let var = sq[i] / n as f64;
            assert!((var - sd * sd).abs() < 4.0 * sd * sd * (2.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn tiny_sigma_returns_mean() {
        let p = linear_policy(vec![0.7, 0.1, -0.3], 1e-300);
        let mut rng = crate::seeded_rng(1);
        let s = [0.5, 1.5];
        assert_eq!(p.sample_action(&s, &mut rng).unwrap(), p.mu(&s).unwrap());
    }

    #[test]
    fn grad_vanishes_at_mean_for_linear_net() {
        let p = linear_policy(vec![0.7, 0.1, -0.3], 0.4);
        let s = [0.5, 1.5];
        let mu = p.mu(&s).unwrap();
        assert!(p.grad_log_density(&s, &mu).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn grad_log_density_matches_finite_differences() {
        let mut rng = crate::seeded_rng(77);
        let p = PolicyParams::init(3, 2, &[5, 4], 0.4, &mut rng).unwrap();
        let s = [0.3, -1.2, 0.8];
        let a = [0.5, -0.25];
        let analytic = p.grad_log_density(&s, &a).unwrap();
        let numeric = central_difference(p.mean.params(), 1e-5, |theta| {
            let mut q = p.clone();
            q.mean.params_mut().copy_from_slice(theta);
            q.log_density(&s, &a).unwrap()
        });
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn value_of_zero_output_layer_is_zero() {
        let mut rng = crate::seeded_rng(2);
        let mut v = ValueParams::init(4, &[8, 8], &mut rng).unwrap();
        let n = v.net.params().len();
        // Output layer: 8 weights + 1 bias at the end.
        for w in &mut v.net.params_mut()[n - 9..] {
            *w = 0.0;
        }
        assert_eq!(v.value(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn value_is_deterministic() {
        let mut rng = crate::seeded_rng(4);
        let v = ValueParams::init(4, &[16, 16], &mut rng).unwrap();
        let s = [0.1, 0.2, -0.3, 0.4];
        let a = v.value(&s).unwrap();
        assert!((0..10).all(|_| v.value(&s).unwrap().to_bits() == a.to_bits()));
    }

    #[test]
    fn ignored_input_does_not_change_value() {
        let mut rng = crate::seeded_rng(6);
        let mut v = ValueParams::init(3, &[4], &mut rng).unwrap();
        // Zero the first-layer column for input 2.
        for o in 0..4 {
            v.net.params_mut()[o * 3 + 2] = 0.0;
        }
        let a = v.value(&[0.5, -0.5, 10.0]).unwrap();
        let b = v.value(&[0.5, -0.5, -3.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_critic_gradient_is_state() {
        let v = ValueParams::new(Mlp::from_params(&[3, 1], vec![0.2, -0.1, 0.4, 0.0]).unwrap()).unwrap();
        let s = [1.5, -2.0, 0.25];
        assert_eq!(v.grad_value(&s).unwrap(), vec![1.5, -2.0, 0.25, 1.0]);
    }

    #[test]
    fn grad_value_differs_between_states() {
        let mut rng = crate::seeded_rng(8);
        let v = ValueParams::init(2, &[6, 6], &mut rng).unwrap();
        let g1 = v.grad_value(&[0.1, 0.2]).unwrap();
        let g2 = v.grad_value(&[-0.7, 0.9]).unwrap();
        assert_ne!(g1, g2);
        let numeric = central_difference(v.net.params(), 1e-5, |nu| {
            let mut w = v.clone();
            w.net.params_mut().copy_from_slice(nu);
            w.value(&[0.1, 0.2]).unwrap()
        });
        assert!(relative_error(&g1, &numeric) < 1e-4);
    }
}
