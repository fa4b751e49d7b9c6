//! Experience memory.
//!
//! Every environment step is stored, sustained or not, together with the
//! sustain metadata needed to re-weight it later. Trajectories are only ever
//! started at fresh (agent-decision) steps.

use std::collections::VecDeque;
use std::hash::{Hash, Hasher};
use std::path::Path;

use crate::approximator::write_floats;
use crate::{Error, Result};

/// One environment step with its behavior-policy record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// A true terminal state was reached; no bootstrapping past this step.
    pub terminal: bool,
    /// The episode was cut by its time limit; bootstrap from `s_next`.
    pub truncated: bool,
    /// `a` was drawn from the actor on this step.
    pub fresh: bool,
    /// Termination probability used when this step's action was decided.
    pub p_eff: f64,
    /// `ln pi_a(a | s)` under the parameters that acted.
    pub base_logd: f64,
    /// Steps the action had already lasted when this step executed.
    pub run_len: usize,
    pub t_global: u64,
}

impl Transition {
    fn ends_episode(&self) -> bool {
        self.terminal || self.truncated
    }

    /// Checks the record on its own and against the step before it.
    pub fn validate(&self, prev: Option<&Transition>) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        if self.fresh && self.run_len != 0 {
            return bad(format!("fresh transition with run_len {}", self.run_len));
        }
        if !(self.p_eff > 0.0 && self.p_eff <= 1.0) {
            return bad(format!("p_eff {} outside (0, 1]", self.p_eff));
        }
        if !self.base_logd.is_finite() {
            return bad("non-finite behavior log density".into());
        }
        if self.terminal && self.truncated {
            return bad("transition both terminal and truncated".into());
        }
        if !self.fresh {
            match prev {
                Some(p) if !p.ends_episode() && p.a == self.a && p.run_len + 1 == self.run_len => {}
                _ => return bad("sustained transition does not continue the previous action".into()),
            }
        }
        Ok(())
    }

    fn hash_into<H: Hasher>(&self, h: &mut H) {
        for v in self.s.iter().chain(&self.a).chain(&self.s_next) {
            v.to_bits().hash(h);
        }
        self.r.to_bits().hash(h);
        self.p_eff.to_bits().hash(h);
        self.base_logd.to_bits().hash(h);
        (self.terminal, self.truncated, self.fresh, self.run_len, self.t_global).hash(h);
    }
}

/// Contiguous window of transitions from a single episode, starting fresh.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn new(steps: Vec<Transition>) -> Result<Self> {
        let first = steps.first().ok_or(Error::Empty("trajectory"))?;
        if !first.fresh {
            return Err(Error::Contract("trajectory must start with a fresh step".into()));
        }
        if steps[..steps.len() - 1].iter().any(Transition::ends_episode) {
            return Err(Error::Contract("trajectory crosses an episode boundary".into()));
        }
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// State to bootstrap from after the last step, if any.
    pub fn bootstrap(&self) -> Option<&[f64]> {
        self.steps
            .last()
            .filter(|t| !t.terminal)
            .map(|t| t.s_next.as_slice())
    }
}

/// Ring buffer of transitions with an index of fresh steps.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    /// Sequence number of `items[0]`.
    base: u64,
    /// Sequence numbers of fresh transitions, ascending.
    fresh: VecDeque<u64>,
    /// Sequence number of the latest episode-ending transition.
    last_end: Option<u64>,
    /// Wrapping sum of per-transition hashes keyed by sequence number.
    digest: u64,
}

fn entry_hash(seq: u64, tr: &Transition) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    seq.hash(&mut h);
    tr.hash_into(&mut h);
    h.finish()
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
            base: 0,
            fresh: VecDeque::new(),
            last_end: None,
            digest: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Buffer positions of fresh transitions, oldest first.
    pub fn fresh_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.fresh.iter().map(move |&q| (q - self.base) as usize)
    }

    pub fn push(&mut self, tr: Transition) -> Result<()> {
        tr.validate(self.items.back())?;
        if self.items.len() == self.capacity {
            if let Some(old) = self.items.pop_front() {
                self.digest = self.digest.wrapping_sub(entry_hash(self.base, &old));
            }
            if self.fresh.front() == Some(&self.base) {
                self.fresh.pop_front();
            }
            self.base += 1;
        }
        let seq = self.base + self.items.len() as u64;
        if tr.fresh {
            self.fresh.push_back(seq);
        }
        if tr.ends_episode() {
            self.last_end = Some(seq);
        }
        self.digest = self.digest.wrapping_add(entry_hash(seq, &tr));
        self.items.push_back(tr);
        Ok(())
    }

    /// Number of fresh steps that can start a trajectory of length `n`: either
    /// `n` steps are recorded after them or their episode already ended.
    pub fn eligible_starts(&self, n: usize) -> usize {
        if self.items.is_empty() || n == 0 {
            return 0;
        }
        let last = self.base + self.items.len() as u64 - 1;
        let full_window = (last + 1).checked_sub(n as u64);
        let limit = match (full_window, self.last_end) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        match limit {
            Some(limit) => self.fresh.partition_point(|&q| q <= limit),
            None => 0,
        }
    }

    /// Draws a start uniformly among eligible fresh steps and returns up to
    /// `n` transitions from it, stopping early at an episode end.
    pub fn sample_trajectory<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Trajectory> {
        let count = self.eligible_starts(n);
        if count == 0 {
            return Err(Error::EmptyBuffer);
        }
        let start = (self.fresh[rng.random_range(0..count)] - self.base) as usize;
        let mut steps = Vec::with_capacity(n);
        for tr in self.items.range(start..).take(n) {
            steps.push(tr.clone());
            if tr.ends_episode() {
                break;
            }
        }
        Trajectory::new(steps)
    }

    /// Position-sensitive hash of the full buffer contents, maintained
    /// incrementally so it costs O(1).
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        (self.base, self.items.len(), self.digest, self.fresh.len(), self.last_end).hash(&mut h);
        h.finish()
    }

    /// Writes the buffer as little-endian `f64`s: a header
    /// `[1, count, state_dim, action_dim]`, then per transition
    /// `s, a, r, s_next, terminal, truncated, fresh, p_eff, base_logd, run_len, t_global`.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let (sd, ad) = self
            .items
            .front()
            .map(|t| (t.s.len(), t.a.len()))
            .unwrap_or((0, 0));
        let mut out = vec![1.0, self.items.len() as f64, sd as f64, ad as f64];
        for t in &self.items {
            out.extend_from_slice(&t.s);
            out.extend_from_slice(&t.a);
            out.push(t.r);
            out.extend_from_slice(&t.s_next);
            out.extend([
                t.terminal as u8 as f64,
                t.truncated as u8 as f64,
                t.fresh as u8 as f64,
                t.p_eff,
                t.base_logd,
                t.run_len as f64,
                t.t_global as f64,
            ]);
        }
        write_floats(path, &out)
    }
}
