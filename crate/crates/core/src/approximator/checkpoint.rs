//! Parameter checkpoints as a flat little-endian `f64` stream.
//!
//! ```text
//! version (1)  step
//! actor:  n_sizes  sizes[n_sizes]  n_sigma  sigma[n_sigma]  n_params  params[n_params]
//! critic: n_sizes  sizes[n_sizes]  0                         n_params  params[n_params]
//! ```
//!
//! Counts and sizes are stored as integral floats.

use std::io::{Read, Write};
use std::path::Path;

use super::{Mlp, PolicyParams, ValueParams};
use crate::{Error, Result};

const VERSION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actor: PolicyParams,
    pub critic: ValueParams,
    /// Environment steps taken when the checkpoint was written.
    pub step: u64,
}

impl Checkpoint {
    pub fn to_floats(&self) -> Vec<f64> {
        let mut out = vec![VERSION, self.step as f64];
        push_block(&mut out, &self.actor.mean, self.actor.sigma());
        push_block(&mut out, &self.critic.net, &[]);
        out
    }

    pub fn from_floats(data: &[f64]) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        if r.next()? != VERSION {
            return Err(Error::Format("unsupported checkpoint version".into()));
        }
        let step = r.count()? as u64;
        let (mean, sigma) = r.block()?;
        let actor = PolicyParams::new(mean, sigma)?;
        let (net, sigma) = r.block()?;
        if !sigma.is_empty() {
            return Err(Error::Format("critic block carries a sigma vector".into()));
        }
        let critic = ValueParams::new(net)?;
        if r.pos != data.len() {
            return Err(Error::Format("trailing data after checkpoint".into()));
        }
        Ok(Self { actor, critic, step })
    }
}

fn push_block(out: &mut Vec<f64>, net: &Mlp, sigma: &[f64]) {
    out.push(net.sizes().len() as f64);
    out.extend(net.sizes().iter().map(|&s| s as f64));
    out.push(sigma.len() as f64);
    out.extend_from_slice(sigma);
    out.push(net.params().len() as f64);
    out.extend_from_slice(net.params());
}

struct Reader<'a> {
    data: &'a [f64],
    pos: usize,
}

impl Reader<'_> {
    fn next(&mut self) -> Result<f64> {
        let v = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        self.pos += 1;
        Ok(v)
    }

    fn count(&mut self) -> Result<usize> {
        let v = self.next()?;
        if v < 0.0 || v.fract() != 0.0 || v > 1e15 {
            return Err(Error::Format(format!("expected a count, found {v}")));
        }
        Ok(v as usize)
    }

    fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let v = self.data[self.pos..end].to_vec();
        self.pos = end;
        Ok(v)
    }

    fn block(&mut self) -> Result<(Mlp, Vec<f64>)> {
        let n_sizes = self.count()?;
        let sizes = (0..n_sizes).map(|_| self.count()).collect::<Result<Vec<_>>>()?;
        let n_sigma = self.count()?;
        let sigma = self.take(n_sigma)?;
        let n_params = self.count()?;
        let params = self.take(n_params)?;
        Ok((Mlp::from_params(&sizes, params)?, sigma))
    }
}

pub fn write_floats(path: &Path, data: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_floats(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("file length is not a multiple of 8 bytes".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_floats(path, &ckpt.to_floats())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_floats(&read_floats(path)?)
}
