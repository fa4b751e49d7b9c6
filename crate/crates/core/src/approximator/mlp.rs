use crate::error::check_dim;
use crate::{Error, Result};

/// Fully connected network, `tanh` on hidden layers, linear output.
///
/// Parameters are stored flat, layer after layer: the row-major weight matrix
/// (`out x in`) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Dot product with four independent accumulators, so the additions pipeline.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        })
    }

    /// Fan-in scaled uniform initialization; the output layer is shrunk by 0.01
    /// so the initial outputs sit near zero. Biases start at zero.
    pub fn init<R: rand::Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let scale = if l + 1 == layers { 0.01 } else { 1.0 };
            for w in &mut net.params[off..off + n_in * n_out] {
                *w = scale * rng.random_range(-bound..bound);
            }
            off += n_in * n_out + n_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        check_dim("mlp parameters", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = MlpCache::default();
        self.forward_cached(x, &mut cache)?;
        Ok(cache.acts.pop().unwrap_or_default())
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut MlpCache) -> Result<()> {
        check_dim("mlp input", self.input_dim(), x.len())?;
        let layers = self.sizes.len() - 1;
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (head, tail) = cache.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + dot(row, input);
                out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            off += n_in * n_out + n_out;
        }
        Ok(())
    }

    /// Adds `d(out_grad . output) / d(params)` into `grad`, using activations
    /// from the most recent `forward_cached` call.
    pub fn backward(&self, cache: &MlpCache, out_grad: &[f64], grad: &mut [f64]) -> Result<()> {
        check_dim("mlp output gradient", self.output_dim(), out_grad.len())?;
        check_dim("mlp gradient buffer", self.params.len(), grad.len())?;
        let layers = self.sizes.len() - 1;
        if cache.acts.len() != layers + 1 {
            return Err(Error::Contract("backward called without a forward pass".into()));
        }
        let mut delta = out_grad.to_vec();
        let mut prev = Vec::new();
        let mut end = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = end - (n_in * n_out + n_out);
            let input = &cache.acts[l];
            {
                let (gw, gb) = grad[start..end].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    gb[o] += d;
                    if d != 0.0 {
                        for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                            *g += d * xi;
                        }
                    }
                }
            }
            if l > 0 {
                let w = &self.params[start..start + n_in * n_out];
                prev.clear();
                prev.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += wi * d;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                std::mem::swap(&mut delta, &mut prev);
            }
            end = start;
        }
        Ok(())
    }
}
