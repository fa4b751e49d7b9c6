//! Differentiable function approximators for the actor and critic.
//!
//! Both networks are plain fully connected MLPs over a flat `Vec<f64>` of
//! parameters, with hand-written backpropagation. The actor outputs the mean of
//! a diagonal Gaussian whose standard deviation is set externally.

mod adam;
mod checkpoint;
mod mlp;
mod policy;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, read_floats, write_checkpoint, write_floats, Checkpoint};
pub use mlp::{Mlp, MlpCache};
pub use policy::{PolicyParams, ValueParams, LN_SQRT_2PI};

/// Hidden layer widths used for both actor and critic.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
