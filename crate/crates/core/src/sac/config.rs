use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Soft actor-critic settings. Defaults follow the benchmark protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Average policy standard deviation the entropy coefficient steers toward.
    pub target_std: f64,
    pub polyak: f64,
    /// Steps of uniform random actions at the start of a task.
    pub uniform_steps: usize,
    /// Steps collected before the first gradient update of a task.
    pub warmup_steps: usize,
    pub updates_per_block: usize,
    pub env_steps_per_block: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub buffer_capacity: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub init_log_alpha: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_learning_rate: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            gamma: 0.99,
            target_std: 0.089,
            polyak: 0.995,
            uniform_steps: 10_000,
            warmup_steps: 1_000,
            updates_per_block: 50,
            env_steps_per_block: 50,
            eval_every: 20_000,
            eval_episodes: 10,
            buffer_capacity: 1_000_000,
            hidden_layers: 4,
            hidden_width: 256,
            init_log_alpha: 0.0,
            alpha_min: 1e-6,
            alpha_max: 1e2,
            alpha_learning_rate: 1e-3,
        }
    }
}

impl SacConfig {
    /// Small networks, half the update ratio and a 2K evaluation grid for
    /// single-machine runs.
    pub fn desk() -> Self {
        Self {
            uniform_steps: 1_000,
            warmup_steps: 500,
            eval_every: 2_000,
            updates_per_block: 25,
            hidden_layers: 2,
            hidden_width: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.polyak >= 0.0 && self.polyak < 1.0) {
            return bad("polyak must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size must be positive and fit in the buffer");
        }
        if self.learning_rate <= 0.0 || self.alpha_learning_rate <= 0.0 {
            return bad("learning rates must be positive");
        }
        if self.target_std <= 0.0 {
            return bad("target_std must be positive");
        }
        if self.env_steps_per_block == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("block size, eval interval and eval episodes must be positive");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max) {
            return bad("alpha bounds must satisfy 0 < min <= max");
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return bad("network must have at least one hidden layer");
        }
        Ok(())
    }
}
