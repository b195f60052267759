use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cl::{Method, MethodHyperparams, PruneMaskSet};
use crate::env::{resolve_sequence, TaskSpec};
use crate::nn::NetworkConfig;
use crate::sac::{BoundaryFlags, HeadMode, SacConfig};
use crate::{stream_rng, Error, Result};

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_ROOT_VAR: &str = "CWORLD_OUTPUT_ROOT";

/// Protocol ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub single_head_onehot: bool,
    pub no_buffer_reset: bool,
    pub no_random_exploration: bool,
    pub critic_regularization: bool,
}

impl AblationFlags {
    pub fn boundary(self) -> BoundaryFlags {
        BoundaryFlags {
            reset_buffer: !self.no_buffer_reset,
            random_exploration: !self.no_random_exploration,
            reset_optimizer: true,
        }
    }
}

fn desk_steps() -> usize {
    20_000
}

fn desk_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// A complete experiment: one method on one task sequence over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset name (`SW10`, `SW20`, `triplet-3`, ...) or path to a suite file.
    pub sequence: String,
    pub method: Method,
    #[serde(default = "desk_steps")]
    pub steps_per_task: usize,
    #[serde(default = "desk_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub flags: AblationFlags,
    #[serde(default = "MethodHyperparams::desk")]
    pub hyperparams: MethodHyperparams,
    #[serde(default = "SacConfig::desk")]
    pub sac: SacConfig,
    /// Shuffles the sequence with this seed when set.
    #[serde(default)]
    pub order_seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `sequence` and `method`.
    pub fn new(sequence: impl Into<String>, method: Method) -> Self {
        Self {
            sequence: sequence.into(),
            method,
            steps_per_task: desk_steps(),
            seeds: desk_seeds(),
            flags: AblationFlags::default(),
            hyperparams: MethodHyperparams::desk(),
            sac: SacConfig::desk(),
            order_seed: None,
            output_dir: None,
        }
    }

    pub fn parse(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Benchmark-scale training: 1M steps per task, full-size networks.
    pub fn paper_scale(mut self) -> Self {
        self.steps_per_task = 1_000_000;
        self.sac = SacConfig::default();
        self.hyperparams.packnet_finetune_steps = 100_000;
        self
    }

    /// Resolved task sequence, shuffled when `order_seed` is set.
    pub fn tasks(&self) -> Result<Vec<TaskSpec>> {
        let tasks = resolve_sequence(&self.sequence)?;
        Ok(match self.order_seed {
            Some(s) => random_order(&tasks, s),
            None => tasks,
        })
    }

    pub fn head_mode(&self, tasks: usize) -> HeadMode {
        if self.flags.single_head_onehot {
            HeadMode::OneHot { tasks }
        } else {
            HeadMode::MultiHead
        }
    }

    pub fn actor_network(&self, tasks: usize) -> NetworkConfig {
        let heads = self.head_mode(tasks);
        NetworkConfig::new(heads.input_dim(), heads.heads(tasks), 8)
            .with_hidden(self.sac.hidden_layers, self.sac.hidden_width)
    }

    pub fn total_steps(&self, tasks: usize) -> usize {
        self.steps_per_task * tasks
    }

    /// Checks everything that can be checked before training starts,
    /// including PackNet capacity.
    pub fn validate(&self) -> Result<Vec<TaskSpec>> {
        self.sac.validate()?;
        self.hyperparams.validate(self.method)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.steps_per_task < self.sac.eval_every || !self.steps_per_task.is_multiple_of(self.sac.eval_every) {
            return Err(Error::Config(format!(
                "steps_per_task {} must be a positive multiple of eval_every {}",
                self.steps_per_task, self.sac.eval_every
            )));
        }
        let tasks = self.tasks()?;
        if self.method == Method::PackNet {
            let masks = PruneMaskSet::for_network(&self.actor_network(tasks.len()), self.hyperparams.packnet_keep_frac);
            if tasks.len() > masks.task_capacity() {
                return Err(Error::Capacity {
                    task: masks.task_capacity(),
                    free: masks.prunable_total(),
                    need: tasks.len() * masks.per_task(),
                });
            }
        }
        Ok(tasks)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Uniform permutation of `suite`, reproducible from `seed`.
pub fn random_order(suite: &[TaskSpec], seed: u64) -> Vec<TaskSpec> {
    let mut out = suite.to_vec();
    out.shuffle(&mut stream_rng(seed, 0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_uses_desk_defaults() {
        let c = ExperimentConfig::parse(r#"{"sequence":"SW10","method":"ewc"}"#).unwrap();
        assert_eq!(c, ExperimentConfig::new("SW10", Method::Ewc));
        assert!(c.validate().is_ok());
        assert!(ExperimentConfig::parse(r#"{"sequence":"SW10","method":"ewc","bogus":1}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"sequence":"SW10","method":"nope"}"#).is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let mut c = ExperimentConfig::new("triplet-2", Method::PackNet);
        c.flags.no_buffer_reset = true;
        c.order_seed = Some(4);
        let back = ExperimentConfig::parse(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.seeds.push(9);
        assert_ne!(d.hash(), c.hash());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ExperimentConfig::new("SW10", Method::FineTune);
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new("SW10", Method::FineTune);
        c.steps_per_task = c.sac.eval_every / 2;
        assert!(c.validate().is_err());
        let c = ExperimentConfig::new("no-such-sequence", Method::FineTune);
        assert!(c.validate().is_err());
    }

    #[test]
    fn random_order_is_a_reproducible_permutation() {
        let suite = resolve_sequence("SW10").unwrap();
        let a = random_order(&suite, 7);
        assert_eq!(a, random_order(&suite, 7));
        let mut names: Vec<_> = a.iter().map(|t| t.name.clone()).collect();
        names.sort();
        let mut orig: Vec<_> = suite.iter().map(|t| t.name.clone()).collect();
        orig.sort();
        assert_eq!(names, orig);
    }
}
