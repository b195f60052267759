//! Soft actor-critic with multi-head networks and the task-sequence protocol.

pub mod agent;
pub mod buffer;
pub mod config;
pub mod eval;
pub mod popart;
pub mod train;
pub mod update;

pub use agent::{select_action, ActionMode, Batch, Diagnostics, SacAgent, UpdateGrads};
pub use buffer::ReplayBuffer;
pub use config::SacConfig;
pub use eval::{evaluate, evaluate_with, EvalTask};
pub use popart::{popart_update, rescale_head, PopArtStats, PopArtUpdate};
pub use train::{BoundaryFlags, HeadMode, RunState};
pub use update::sac_update;
