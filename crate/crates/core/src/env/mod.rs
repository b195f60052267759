//! Synthetic continual manipulation tasks.
//!
//! Each task moves a 3-D effector (and optionally a grasped object) toward a
//! goal. Tasks differ in how the 4-D action maps onto world axes, which gives
//! tunable transfer between tasks without a physics engine.

pub mod presets;
pub mod sim;
pub mod task;

pub use presets::{preset_names, resolve_sequence, sequence_preset};
pub use sim::{
    reset, step, Action, EnvState, Observation, StepOutcome, Transition, ACTION_DIM, EFFECTOR_START, EPISODE_LEN,
    GRASP_RADIUS, OBS_DIM,
};
pub use task::{load_suite, parse_suite, BoxRegion, TargetEntity, TaskSpec};
