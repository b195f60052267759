//! Multi-head MLPs with exact reverse-mode gradients.

pub mod mlp;
pub mod params;
pub mod tape;

pub use mlp::{forward_actor, forward_actor_batch, forward_critic, GaussianHead, NetworkConfig};
pub use params::{
    clip_global_norm, gradient, value_and_gradient, Adam, GradientVector, ParamEntry,
    ParameterBlock,
};
pub use tape::{Mat, Tape, Var};
