use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::agent::ActionMode;
use super::train::HeadMode;
use crate::env::{reset, step, TaskSpec, ACTION_DIM, EPISODE_LEN};
use crate::nn::{forward_actor_batch, NetworkConfig, ParameterBlock};
use crate::{Result, Rng};

/// One task to evaluate together with the actor parameters it acts with.
#[derive(Clone, Copy, Debug)]
pub struct EvalTask<'a> {
    pub spec: &'a TaskSpec,
    pub task_id: usize,
    pub actor: &'a ParameterBlock,
}

/// Fraction of `episodes` stochastic-policy episodes per task whose success
/// flag latched. Episodes of one task run in lockstep; only `rng` is
/// consumed.
pub fn evaluate(
    net: &NetworkConfig,
    heads: HeadMode,
    tasks: &[EvalTask<'_>],
    episodes: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    evaluate_with(net, heads, tasks, episodes, ActionMode::Stochastic, rng)
}

/// [`evaluate`] under an explicit action mode.
pub fn evaluate_with(
    net: &NetworkConfig,
    heads: HeadMode,
    tasks: &[EvalTask<'_>],
    episodes: usize,
    mode: ActionMode,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut rates = Vec::with_capacity(tasks.len());
    for task in tasks {
        let head = heads.head(task.task_id);
        let mut envs: Vec<_> = (0..episodes).map(|_| reset(task.spec, rng)).collect();
        for _ in 0..EPISODE_LEN {
            let rows: Vec<f64> = envs
                .iter()
                .flat_map(|(_, obs)| heads.input(obs, task.task_id))
                .collect();
            let x = Array2::from_shape_vec((episodes, net.input_dim), rows).expect("stacked inputs");
            let (mean, log_std) = forward_actor_batch(task.actor, net, x, head)?;
            for (i, (state, obs)) in envs.iter_mut().enumerate() {
                let action: [f64; ACTION_DIM] = std::array::from_fn(|j| match mode {
                    ActionMode::Deterministic => mean[[i, j]].tanh(),
                    ActionMode::Stochastic => {
                        let z: f64 = rng.sample(StandardNormal);
                        (mean[[i, j]] + log_std[[i, j]].exp() * z).tanh()
                    }
                    ActionMode::Uniform => rng.random_range(-1.0..=1.0),
                });
                *obs = step(state, task.spec, &action)?.obs;
            }
        }
        let hits = envs.iter().filter(|(s, _)| s.succeeded_this_episode).count();
        rates.push(hits as f64 / episodes as f64);
    }
    Ok(rates)
}
