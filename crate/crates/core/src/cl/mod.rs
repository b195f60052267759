//! Continual-learning methods layered on top of SAC.

pub mod agem;
pub mod packnet;
pub mod quadratic;
pub mod replay;
pub mod vcl;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

pub use agem::{agem_project, Projection};
pub use packnet::{packnet_mask_gradients, packnet_prune, Phase, PruneMaskSet, Slot};
pub use quadratic::{
    fisher_diag_gaussian, quadratic_penalty, quadratic_penalty_grad, AnchorParameters,
    ImportanceWeights, EWC_MIN_IMPORTANCE,
};
pub use replay::{reservoir_insert, EpisodicMemory, Reservoir};
pub use vcl::{vcl_kl, vcl_kl_grad, vcl_sample, WeightPosterior};

use crate::env::Transition;
use crate::nn::{Adam, ParameterBlock};
use crate::sac::{ReplayBuffer, SacAgent};
use crate::{Error, Result, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "finetune")]
    FineTune,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "ewc")]
    Ewc,
    #[serde(rename = "mas")]
    Mas,
    #[serde(rename = "vcl")]
    Vcl,
    #[serde(rename = "packnet")]
    PackNet,
    #[serde(rename = "reservoir")]
    Reservoir,
    #[serde(rename = "perfect_memory")]
    PerfectMemory,
    #[serde(rename = "agem")]
    Agem,
    #[serde(rename = "multitask")]
    MultiTask,
    #[serde(rename = "multitask_popart")]
    MultiTaskPopArt,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::FineTune,
        Method::L2,
        Method::Ewc,
        Method::Mas,
        Method::Vcl,
        Method::PackNet,
        Method::Reservoir,
        Method::PerfectMemory,
        Method::Agem,
        Method::MultiTask,
        Method::MultiTaskPopArt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FineTune => "finetune",
            Method::L2 => "l2",
            Method::Ewc => "ewc",
            Method::Mas => "mas",
            Method::Vcl => "vcl",
            Method::PackNet => "packnet",
            Method::Reservoir => "reservoir",
            Method::PerfectMemory => "perfect_memory",
            Method::Agem => "agem",
            Method::MultiTask => "multitask",
            Method::MultiTaskPopArt => "multitask_popart",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    pub fn is_multitask(self) -> bool {
        matches!(self, Method::MultiTask | Method::MultiTaskPopArt)
    }

    /// Methods whose replay buffer must survive task boundaries.
    pub fn keeps_buffer(self) -> bool {
        matches!(self, Method::Reservoir | Method::PerfectMemory)
    }

    pub fn default_lambda(self) -> f64 {
        match self {
            Method::L2 => 1e5,
            Method::Ewc | Method::Mas => 1e4,
            Method::Vcl => 1.0,
            _ => 0.0,
        }
    }
}

/// Method-specific settings; unset values fall back to per-method defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodHyperparams {
    pub lambda: Option<f64>,
    /// Buffer samples used to estimate EWC and MAS importances.
    pub importance_samples: usize,
    pub packnet_keep_frac: f64,
    pub packnet_finetune_steps: usize,
    pub packnet_clip: f64,
    pub packnet_clip_scale: f64,
    pub agem_episodic_batch: usize,
    pub agem_memory_per_task: usize,
    pub replay_batch_size: Option<usize>,
    pub reservoir_capacity: Option<usize>,
    pub vcl_init_std: f64,
}

impl Default for MethodHyperparams {
    fn default() -> Self {
        Self {
            lambda: None,
            importance_samples: 2560,
            packnet_keep_frac: 0.05,
            packnet_finetune_steps: 100_000,
            packnet_clip: 2e-5,
            packnet_clip_scale: 1.0,
            agem_episodic_batch: 128,
            agem_memory_per_task: 10_000,
            replay_batch_size: None,
            reservoir_capacity: None,
            vcl_init_std: 0.025,
        }
    }
}

impl MethodHyperparams {
    /// Defaults with a PackNet finetune sized for desk-scale tasks.
    pub fn desk() -> Self {
        Self {
            packnet_finetune_steps: 2_000,
            ..Self::default()
        }
    }

    pub fn lambda(&self, method: Method) -> f64 {
        self.lambda.unwrap_or_else(|| method.default_lambda())
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let l = self.lambda(method);
        if !(l >= 0.0 && l.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.packnet_keep_frac > 0.0 && self.packnet_keep_frac <= 1.0) {
            return bad("packnet_keep_frac must lie in (0, 1]");
        }
        if self.packnet_clip <= 0.0 || self.packnet_clip_scale <= 0.0 {
            return bad("packnet clipping must be positive");
        }
        if self.importance_samples == 0 || self.agem_episodic_batch == 0 || self.agem_memory_per_task == 0 {
            return bad("sample counts must be positive");
        }
        if self.vcl_init_std <= 0.0 {
            return bad("vcl_init_std must be positive");
        }
        if self.replay_batch_size == Some(0) || self.reservoir_capacity == Some(0) {
            return bad("replay sizes must be positive");
        }
        Ok(())
    }
}

/// Anchor and accumulated importance of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyTerm {
    pub anchor: AnchorParameters,
    pub importance: ImportanceWeights,
}

impl PenaltyTerm {
    fn consolidate(term: &mut Option<PenaltyTerm>, params: &[f64], importance: &[f64]) -> Result<()> {
        let t = term.get_or_insert_with(|| PenaltyTerm {
            anchor: AnchorParameters { values: Vec::new() },
            importance: ImportanceWeights::zeros(params.len()),
        });
        t.importance.accumulate(importance)?;
        t.anchor.values = params.to_vec();
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticState {
    pub method: Method,
    pub lambda: f64,
    pub actor: Option<PenaltyTerm>,
    /// Present only with critic regularization.
    pub critics: Option<[Option<PenaltyTerm>; 2]>,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct VclState {
    /// `mean` mirrors the agent's actor parameters.
    pub posterior: WeightPosterior,
    pub has_prior: bool,
    pub lambda: f64,
    pub log_std_opt: Adam,
}

#[derive(Clone, Debug)]
pub struct PackNetState {
    pub masks: PruneMaskSet,
    pub phase: Phase,
    pub finetune_steps: usize,
    pub max_norm: f64,
}

#[derive(Clone, Debug)]
pub struct AgemState {
    pub memory: EpisodicMemory,
    pub episodic_batch: usize,
}

/// Per-run state of the continual-learning method.
#[derive(Clone, Debug)]
pub enum MethodState {
    /// Fine-tuning, replay-only and multi-task methods.
    Plain,
    Quadratic(QuadraticState),
    Vcl(VclState),
    PackNet(PackNetState),
    Agem(AgemState),
}

impl MethodState {
    /// Builds the state for `method`. VCL re-initializes the actor to its
    /// prior mean (zeros, unit layer-norm gain). `regularize_critic` extends
    /// quadratic penalties to both critics.
    pub fn new(
        method: Method,
        hp: &MethodHyperparams,
        regularize_critic: bool,
        agent: &mut SacAgent,
        tasks: usize,
    ) -> Result<Self> {
        hp.validate(method)?;
        let lambda = hp.lambda(method);
        Ok(match method {
            Method::L2 | Method::Ewc | Method::Mas => MethodState::Quadratic(QuadraticState {
                method,
                lambda,
                actor: None,
                critics: regularize_critic.then_some([None, None]),
                samples: hp.importance_samples,
            }),
            Method::Vcl => {
                agent.actor = agent.actor_net.zeros();
                let n = agent.actor.total_count();
                MethodState::Vcl(VclState {
                    posterior: WeightPosterior::new(agent.actor.values().to_vec(), hp.vcl_init_std),
                    has_prior: false,
                    lambda,
                    log_std_opt: Adam::new(n, agent.cfg.learning_rate),
                })
            }
            Method::PackNet => {
                let masks = PruneMaskSet::for_network(&agent.actor_net, hp.packnet_keep_frac);
                if tasks > masks.task_capacity() {
                    return Err(Error::Capacity {
                        task: tasks - 1,
                        free: masks.prunable_total(),
                        need: tasks * masks.per_task(),
                    });
                }
                MethodState::PackNet(PackNetState {
                    masks,
                    phase: Phase::Training,
                    finetune_steps: hp.packnet_finetune_steps,
                    max_norm: hp.packnet_clip * hp.packnet_clip_scale,
                })
            }
            Method::Agem => MethodState::Agem(AgemState {
                memory: EpisodicMemory::new(tasks, hp.agem_memory_per_task),
                episodic_batch: hp.agem_episodic_batch,
            }),
            _ => MethodState::Plain,
        })
    }

    /// Stores a freshly collected transition where the method needs it.
    pub fn observe(&mut self, t: &Transition, rng: &mut Rng) -> Result<()> {
        if let MethodState::Agem(a) = self {
            a.memory.insert(t.clone(), rng)?;
        }
        Ok(())
    }

    /// Resets optimizer statistics owned by the method.
    pub fn reset_optimizers(&mut self) {
        if let MethodState::Vcl(v) = self {
            v.log_std_opt.reset();
        }
    }

    /// End-of-task hook: anchors and importances for quadratic penalties,
    /// posterior promotion for VCL, pruning for PackNet. PackNet fine-tuning
    /// is driven by the caller afterwards.
    pub fn consolidate(
        &mut self,
        agent: &mut SacAgent,
        buffer: &ReplayBuffer,
        task_id: usize,
        head: usize,
        rng: &mut Rng,
    ) -> Result<()> {
        match self {
            MethodState::Plain | MethodState::Agem(_) => Ok(()),
            MethodState::Quadratic(q) => q.consolidate(agent, buffer, task_id, head, rng),
            MethodState::Vcl(v) => {
                v.posterior.mean = agent.actor.values().to_vec();
                v.posterior.promote();
                v.has_prior = true;
                Ok(())
            }
            MethodState::PackNet(p) => {
                p.masks = packnet_prune(agent.actor.values_mut(), &p.masks, task_id)?;
                Ok(())
            }
        }
    }

    /// Actor parameters task `task_id` should act with while
    /// `current_task` trains. Only PackNet differs from the raw actor.
    pub fn actor_view(&self, actor: &ParameterBlock, task_id: usize, current_task: usize) -> ParameterBlock {
        match self {
            MethodState::PackNet(p) => actor
                .with_values(p.masks.view(actor.values(), task_id, current_task))
                .expect("view keeps the layout"),
            _ => actor.clone(),
        }
    }
}

/// Up to `n` transitions of `task_id` drawn uniformly from the buffer.
fn task_samples<'a>(buffer: &'a ReplayBuffer, task_id: usize, n: usize, rng: &mut Rng) -> Result<Vec<&'a Transition>> {
    let own: Vec<&Transition> = buffer.items().iter().filter(|t| t.task_id == task_id).collect();
    if own.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    Ok((0..n).map(|_| *own.choose(rng).expect("non-empty")).collect())
}

impl QuadraticState {
    fn consolidate(
        &mut self,
        agent: &SacAgent,
        buffer: &ReplayBuffer,
        task_id: usize,
        head: usize,
        rng: &mut Rng,
    ) -> Result<()> {
        let n = agent.actor.total_count();
        let needs_data = self.method != Method::L2;
        let samples = if needs_data {
            task_samples(buffer, task_id, self.samples, rng)?
        } else {
            Vec::new()
        };
        let obs: Vec<&[f64]> = samples.iter().map(|t| t.obs.as_slice()).collect();
        let actor_imp = match self.method {
            Method::L2 => vec![1.0; n],
            Method::Ewc => {
                let mut f = quadratic::policy_fisher(&agent.actor, &agent.actor_net, &obs, head)?;
                quadratic::clip_importance(&mut f);
                f
            }
            _ => quadratic::output_sensitivity(&agent.actor, &agent.actor_net, &obs, head)?,
        };
        PenaltyTerm::consolidate(&mut self.actor, agent.actor.values(), &actor_imp)?;
        if let Some(terms) = self.critics.as_mut() {
            let inputs: Vec<Vec<f64>> = samples
                .iter()
                .map(|t| t.obs.iter().chain(&t.action).copied().collect())
                .collect();
            let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            for (term, critic) in terms.iter_mut().zip(&agent.critics) {
                let imp = match self.method {
                    Method::L2 => vec![1.0; critic.total_count()],
                    Method::Ewc => {
                        let mut f = quadratic::critic_fisher(critic, &agent.critic_net, &refs, head)?;
                        quadratic::clip_importance(&mut f);
                        f
                    }
                    _ => quadratic::output_sensitivity(critic, &agent.critic_net, &refs, head)?,
                };
                PenaltyTerm::consolidate(term, critic.values(), &imp)?;
            }
        }
        Ok(())
    }
}
