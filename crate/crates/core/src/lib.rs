//! SusACER: actor-critic with experience replay whose actions are stochastically
//! sustained over several environment steps early in training, annealing to
//! per-step control.
//!
//! Module map:
//!
//! - [`sustain`]: geometric sustain process, annealing schedule, exploration scaling.
//! - [`approximator`]: MLP actor/critic, analytic gradients, ADAM, checkpoints.
//! - [`replay`]: ring-buffer memory with sustain metadata and fresh-start sampling.
//! - [`acer`]: action selection, trajectory importance sampling, the update rule.
//! - [`envs`]: point-mass reacher, pendulum swing-up, and a tiny enumerable MDP.
//! - [`verify`]: independent oracles (enumeration, finite differences, variance).
//! - [`harness`]: training loop, evaluation protocol, AULC, sweeps, CSV/SVG output.

pub mod acer;
pub mod approximator;
pub mod envs;
pub mod error;
pub mod harness;
pub mod replay;
pub mod sustain;
pub mod verify;

pub use error::{Error, Result};

/// Deterministic random source used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's random source from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
