//! Continual reinforcement learning harness.
//!
//! The crate bundles everything needed to train a soft actor-critic agent on
//! a sequence of synthetic manipulation tasks, protect earlier tasks with one
//! of seven continual-learning methods, and score the resulting evaluation
//! logs:
//!
//! * [`nn`] – multi-head MLPs with exact reverse-mode gradients.
//! * [`env`] – the synthetic task family and sequence presets.
//! * [`sac`] – replay, the SAC update, evaluation and PopArt.
//! * [`cl`] – L2, EWC, MAS, VCL, PackNet, reservoir replay and A-GEM.
//! * [`metrics`] – performance, transfer, forgetting and bootstrap intervals.
//! * [`runner`] – experiment orchestration and log summaries.
//! * [`io`] – the named-array checkpoint container.

pub mod cl;
pub mod env;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod runner;
pub mod sac;

pub use error::{Error, Result};

/// Deterministic random source used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds a generator for an independent named stream derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
