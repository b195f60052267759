use serde::{Deserialize, Serialize};

use super::agent::{select_action, ActionMode, Diagnostics, SacAgent};
use super::buffer::ReplayBuffer;
use super::update::sac_update;
use crate::cl::{Method, MethodState, Phase};
use crate::env::{Action, Transition, OBS_DIM};
use crate::nn::{forward_actor, ParameterBlock};
use crate::{stream_rng, Error, Result, Rng};

/// RNG stream ids derived from a run seed.
pub mod streams {
    pub const ENV: u64 = 0;
    pub const ACTION: u64 = 1;
    pub const UPDATE: u64 = 2;
    pub const CONSOLIDATION: u64 = 3;
    pub const INIT: u64 = 4;
    /// Evaluation `k` draws from stream `EVAL_BASE + k`.
    pub const EVAL_BASE: u64 = 1 << 32;
}

/// Network input layout and head selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadMode {
    /// One output head per task.
    MultiHead,
    /// One shared head; a one-hot task indicator is appended to observations.
    OneHot { tasks: usize },
}

impl HeadMode {
    pub fn heads(self, tasks: usize) -> usize {
        match self {
            HeadMode::MultiHead => tasks,
            HeadMode::OneHot { .. } => 1,
        }
    }

    pub fn head(self, task_id: usize) -> usize {
        match self {
            HeadMode::MultiHead => task_id,
            HeadMode::OneHot { .. } => 0,
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            HeadMode::MultiHead => OBS_DIM,
            HeadMode::OneHot { tasks } => OBS_DIM + tasks,
        }
    }

    pub fn input(self, obs: &[f64], task_id: usize) -> Vec<f64> {
        let mut v = obs.to_vec();
        if let HeadMode::OneHot { tasks } = self {
            v.extend((0..tasks).map(|k| if k == task_id { 1.0 } else { 0.0 }));
        }
        v
    }
}

/// Behavior at a task switch. All `true` is the standard protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryFlags {
    pub reset_buffer: bool,
    pub random_exploration: bool,
    pub reset_optimizer: bool,
}

impl Default for BoundaryFlags {
    fn default() -> Self {
        Self {
            reset_buffer: true,
            random_exploration: true,
            reset_optimizer: true,
        }
    }
}

/// Everything that evolves during one seed's training run.
#[derive(Clone, Debug)]
pub struct RunState {
    pub agent: SacAgent,
    pub buffer: ReplayBuffer,
    pub method: MethodState,
    pub method_kind: Method,
    pub heads: HeadMode,
    pub batch_size: usize,
    pub task_id: usize,
    pub steps_in_task: usize,
    pub total_steps: usize,
    pub updates: usize,
    /// Uniform-action steps at the start of the current task.
    pub uniform_steps: usize,
    pub consolidated: bool,
    pub last_diagnostics: Option<Diagnostics>,
    action_rng: Rng,
    update_rng: Rng,
    consolidation_rng: Rng,
}

impl RunState {
    pub fn new(
        agent: SacAgent,
        buffer: ReplayBuffer,
        method: MethodState,
        method_kind: Method,
        heads: HeadMode,
        batch_size: usize,
        seed: u64,
    ) -> Self {
        let uniform_steps = agent.cfg.uniform_steps;
        Self {
            agent,
            buffer,
            method,
            method_kind,
            heads,
            batch_size,
            task_id: 0,
            steps_in_task: 0,
            total_steps: 0,
            updates: 0,
            uniform_steps,
            consolidated: false,
            last_diagnostics: None,
            action_rng: stream_rng(seed, streams::ACTION),
            update_rng: stream_rng(seed, streams::UPDATE),
            consolidation_rng: stream_rng(seed, streams::CONSOLIDATION),
        }
    }

    /// Exploration action for a raw observation of `task_id`.
    pub fn act(&mut self, obs: &[f64], task_id: usize) -> Result<Action> {
        let input = self.heads.input(obs, task_id);
        if self.steps_in_task < self.uniform_steps {
            let dummy = crate::nn::GaussianHead {
                mean: vec![0.0; 4],
                log_std: vec![0.0; 4],
            };
            return Ok(select_action(&dummy, ActionMode::Uniform, &mut self.action_rng));
        }
        let policy = forward_actor(&self.agent.actor, &self.agent.actor_net, &input, self.heads.head(task_id))?;
        Ok(select_action(&policy, ActionMode::Stochastic, &mut self.action_rng))
    }

    /// Stores one environment step and runs the scheduled updates.
    pub fn record(
        &mut self,
        obs: &[f64],
        action: Action,
        reward: f64,
        next_obs: &[f64],
        terminal: bool,
        task_id: usize,
    ) -> Result<()> {
        let t = Transition {
            obs: self.heads.input(obs, task_id),
            action,
            reward,
            next_obs: self.heads.input(next_obs, task_id),
            done: terminal,
            task_id,
        };
        self.method.observe(&t, &mut self.consolidation_rng)?;
        self.buffer.push(t, &mut self.action_rng);
        self.steps_in_task += 1;
        self.total_steps += 1;
        let cfg = &self.agent.cfg;
        if self.steps_in_task.is_multiple_of(cfg.env_steps_per_block)
            && self.steps_in_task >= cfg.warmup_steps
            && self.buffer.len() >= self.batch_size
        {
            for _ in 0..self.agent.cfg.updates_per_block {
                self.update_once(self.task_id)?;
            }
        }
        Ok(())
    }

    fn update_once(&mut self, task_id: usize) -> Result<()> {
        let d = sac_update(
            &mut self.agent,
            &self.buffer,
            &mut self.method,
            task_id,
            self.heads,
            self.batch_size,
            &mut self.update_rng,
        )?;
        if !self.agent.actor.is_finite() || !self.agent.critics.iter().all(ParameterBlock::is_finite) {
            return Err(Error::NonFinite(format!("parameters after update {}", self.updates)));
        }
        self.updates += 1;
        self.last_diagnostics = Some(d);
        Ok(())
    }

    /// End-of-task consolidation; PackNet then fine-tunes the weights it
    /// just assigned, on already-collected data only.
    pub fn finish_task(&mut self) -> Result<()> {
        if self.consolidated {
            return Ok(());
        }
        let head = self.heads.head(self.task_id);
        self.method.consolidate(
            &mut self.agent,
            &self.buffer,
            self.task_id,
            head,
            &mut self.consolidation_rng,
        )?;
        if let MethodState::PackNet(p) = &mut self.method {
            p.phase = Phase::Finetuning;
            let steps = p.finetune_steps;
            for _ in 0..steps {
                sac_update(
                    &mut self.agent,
                    &self.buffer,
                    &mut self.method,
                    self.task_id,
                    self.heads,
                    self.batch_size,
                    &mut self.consolidation_rng,
                )?;
            }
            if let MethodState::PackNet(p) = &mut self.method {
                p.phase = Phase::Training;
                p.masks.aux_frozen = true;
            }
        }
        self.consolidated = true;
        Ok(())
    }

    /// Consolidates the finished task if needed, then switches to `next`.
    pub fn task_boundary(&mut self, next: usize, flags: BoundaryFlags) -> Result<()> {
        self.finish_task()?;
        if flags.reset_buffer && !self.method_kind.keeps_buffer() {
            self.buffer.clear();
        }
        if flags.reset_optimizer {
            self.agent.reset_optimizers();
            self.method.reset_optimizers();
        }
        self.uniform_steps = if flags.random_exploration {
            self.agent.cfg.uniform_steps
        } else {
            0
        };
        self.task_id = next;
        self.steps_in_task = 0;
        self.consolidated = false;
        Ok(())
    }

    /// Actor parameters `task_id` acts with right now.
    pub fn actor_for(&self, task_id: usize) -> ParameterBlock {
        self.method.actor_view(&self.agent.actor, task_id, self.task_id)
    }
}
