//! Training loop, evaluation protocol, sweeps and result files.

mod config;
pub mod emit;
mod run;
mod sweep;

pub use config::RunConfig;
pub use run::{aulc, evaluate, train, train_with, EvalEntry, RunRecord};
pub use sweep::{default_threads, run_many, sweep, SweepCell, SweepTable};
