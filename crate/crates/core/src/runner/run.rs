use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OUTPUT_ROOT_VAR};
use crate::cl::{Method, MethodState};
use crate::env::{reset, step, TaskSpec};
use crate::io::NamedArrays;
use crate::metrics::{to_jsonl, EvalRecord};
use crate::sac::train::streams;
use crate::sac::{evaluate, EvalTask, ReplayBuffer, RunState, SacAgent};
use crate::{stream_rng, Result};

/// Returned by evaluation observers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Progress reported to [`run_seed`] observers.
#[derive(Clone, Copy, Debug)]
pub enum Progress<'a> {
    /// Success rates of every task after `step` environment steps.
    Evaluated { step: u64, rates: &'a [f64] },
    /// Training of sequence position `task` is complete, including
    /// consolidation.
    TaskFinished { task: usize, state: &'a RunState },
}

/// Outcome of one seed.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<EvalRecord>,
    pub state: RunState,
    pub stopped_early: bool,
}

/// Builds the initial training state of one seed.
pub fn initial_state(cfg: &ExperimentConfig, tasks: usize, seed: u64) -> Result<RunState> {
    let heads = cfg.head_mode(tasks);
    let mut init = stream_rng(seed, streams::INIT);
    let mut agent = SacAgent::new(heads.input_dim(), heads.heads(tasks), cfg.sac.clone(), &mut init)?;
    if cfg.method == Method::MultiTaskPopArt {
        agent.enable_popart();
    }
    let hp = &cfg.hyperparams;
    let total = cfg.total_steps(tasks);
    let buffer = match cfg.method {
        Method::Reservoir => ReplayBuffer::reservoir(hp.reservoir_capacity.unwrap_or(cfg.sac.buffer_capacity)),
        Method::PerfectMemory => ReplayBuffer::reservoir(hp.reservoir_capacity.unwrap_or(total).max(total)),
        _ => ReplayBuffer::new(cfg.sac.buffer_capacity),
    };
    let batch_size = if cfg.method.keeps_buffer() {
        hp.replay_batch_size.unwrap_or(cfg.sac.batch_size)
    } else {
        cfg.sac.batch_size
    };
    let method = MethodState::new(cfg.method, hp, cfg.flags.critic_regularization, &mut agent, tasks)?;
    Ok(RunState::new(agent, buffer, method, cfg.method, heads, batch_size, seed))
}

/// Serializes networks and method state.
pub fn checkpoint(state: &RunState) -> Result<NamedArrays> {
    let mut na = NamedArrays::new();
    let a = &state.agent;
    na.push_block("actor", &a.actor)?;
    na.push_block("critic0", &a.critics[0])?;
    na.push_block("critic1", &a.critics[1])?;
    na.push_block("target0", &a.targets[0])?;
    na.push_block("target1", &a.targets[1])?;
    na.push_vector("log_alpha", a.log_alpha.clone())?;
    match &state.method {
        MethodState::Quadratic(q) => {
            if let Some(t) = &q.actor {
                na.push_vector("actor/importance", t.importance.values.clone())?;
                na.push_vector("actor/anchor", t.anchor.values.clone())?;
            }
            for (i, t) in q.critics.iter().flatten().enumerate() {
                if let Some(t) = t {
                    na.push_vector(format!("critic{i}/importance"), t.importance.values.clone())?;
                    na.push_vector(format!("critic{i}/anchor"), t.anchor.values.clone())?;
                }
            }
        }
        MethodState::Vcl(v) => {
            na.push_vector("vcl/log_std", v.posterior.log_std.clone())?;
            na.push_vector("vcl/prior_mean", v.posterior.prior_mean.clone())?;
            na.push_vector("vcl/prior_log_std", v.posterior.prior_log_std.clone())?;
        }
        MethodState::PackNet(p) => {
            na.push_vector("packnet/owner", p.masks.owner.iter().map(|&o| o as f64).collect())?;
        }
        MethodState::Plain | MethodState::Agem(_) => {}
    }
    Ok(na)
}

/// Trains one seed over the whole sequence.
///
/// `observe` sees every [`Progress`] event; returning [`Control::Stop`]
/// after an evaluation ends the run there. Outputs go under `out` when
/// given.
pub fn run_seed(
    cfg: &ExperimentConfig,
    tasks: &[TaskSpec],
    seed: u64,
    out: Option<&Path>,
    mut observe: impl FnMut(Progress<'_>) -> Control,
) -> Result<SeedRun> {
    let n = tasks.len();
    let mut state = initial_state(cfg, n, seed)?;
    let mut env_rng = stream_rng(seed, streams::ENV);
    let eval_every = cfg.sac.eval_every as u64;
    let multitask = cfg.method.is_multitask();
    let phases: Vec<(usize, usize)> = if multitask {
        vec![(0, cfg.total_steps(n))]
    } else {
        (0..n).map(|i| (i, cfg.steps_per_task)).collect()
    };
    let mut records = Vec::new();
    let mut global: u64 = 0;
    let mut evals: u64 = 0;
    let mut episodes: usize = 0;
    let mut stopped = false;

    'phases: for (p, &(task, steps)) in phases.iter().enumerate() {
        if p > 0 {
            state.task_boundary(task, cfg.flags.boundary())?;
        }
        let mut env_task = if multitask { episodes % n } else { task };
        let (mut env, mut obs) = reset(&tasks[env_task], &mut env_rng);
        for k in 1..=steps {
            let action = state.act(&obs, env_task)?;
            let outcome = step(&mut env, &tasks[env_task], &action)?;
            state.record(&obs, action, outcome.reward, &outcome.obs, false, env_task)?;
            obs = outcome.obs;
            if outcome.done {
                episodes += 1;
                if multitask {
                    env_task = episodes % n;
                }
                (env, obs) = reset(&tasks[env_task], &mut env_rng);
            }
            global += 1;
            if global.is_multiple_of(eval_every) {
                if k == steps {
                    state.finish_task()?;
                }
                let actors: Vec<_> = (0..n).map(|i| state.actor_for(i)).collect();
                let eval_tasks: Vec<EvalTask<'_>> = tasks
                    .iter()
                    .zip(&actors)
                    .enumerate()
                    .map(|(i, (spec, actor))| EvalTask { spec, task_id: i, actor })
                    .collect();
                let mut rng = stream_rng(seed, streams::EVAL_BASE + evals);
                evals += 1;
                let rates = evaluate(&state.agent.actor_net, state.heads, &eval_tasks, cfg.sac.eval_episodes, &mut rng)?;
                for (i, &r) in rates.iter().enumerate() {
                    records.push(EvalRecord {
                        step: global,
                        task_id: i,
                        success_rate: r,
                        seed,
                        method: cfg.method.name().to_string(),
                        flags: cfg.flags,
                    });
                }
                if observe(Progress::Evaluated { step: global, rates: &rates }) == Control::Stop {
                    stopped = true;
                    break 'phases;
                }
            }
        }
        state.finish_task()?;
        observe(Progress::TaskFinished { task, state: &state });
        if let Some(dir) = out {
            checkpoint(&state)?.write(&dir.join("checkpoints"), &format!("task-{task}"))?;
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("eval.jsonl"), to_jsonl(&records))?;
    }
    Ok(SeedRun {
        seed,
        records,
        state,
        stopped_early: stopped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStatus {
    pub seed: u64,
    pub completed: bool,
    pub error: Option<String>,
    /// Log path relative to the run directory.
    pub log: String,
}

/// Written as `manifest.json` in the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub code_version: String,
    pub tasks: Vec<String>,
    pub steps_per_task: usize,
    pub seeds: Vec<SeedStatus>,
}

impl RunManifest {
    pub fn all_completed(&self) -> bool {
        self.seeds.iter().all(|s| s.completed)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?)
    }
}

/// Directory a config writes to: `output_dir`, else a hashed name under
/// `$CWORLD_OUTPUT_ROOT` (default `runs`).
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    run_dir_in(cfg, &root)
}

/// As [`run_dir`] with an explicit root.
pub fn run_dir_in(cfg: &ExperimentConfig, root: &Path) -> PathBuf {
    if let Some(d) = &cfg.output_dir {
        return d.clone();
    }
    let seq = Path::new(&cfg.sequence)
        .file_stem()
        .map_or_else(|| cfg.sequence.clone(), |s| s.to_string_lossy().into_owned());
    root.join(format!("{seq}-{}-{}", cfg.method.name(), &cfg.hash()[..12]))
}

/// Runs every seed (in parallel) and writes logs, checkpoints and the
/// manifest. A seed that fails, including on non-finite values, is
/// recorded in the manifest and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let tasks = cfg.validate()?;
    let dir = run_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let seeds: Vec<SeedStatus> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let rel = format!("seed-{seed}");
            let res = run_seed(cfg, &tasks, seed, Some(&dir.join(&rel)), |_| Control::Continue);
            SeedStatus {
                seed,
                completed: res.is_ok(),
                error: res.err().map(|e| e.to_string()),
                log: format!("{rel}/eval.jsonl"),
            }
        })
        .collect();
    let manifest = RunManifest {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        tasks: tasks.iter().map(|t| t.name.clone()).collect(),
        steps_per_task: cfg.steps_per_task,
        seeds,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
