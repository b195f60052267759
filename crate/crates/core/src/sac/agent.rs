use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use ndarray::{Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::config::SacConfig;
use super::popart::{rescale_head, PopArtStats};
use crate::env::{Action, Transition, ACTION_DIM};
use crate::nn::mlp::{head, split_gaussian, trunk};
use crate::nn::{Adam, GaussianHead, GradientVector, Mat, NetworkConfig, ParameterBlock, Tape, Var};
use crate::{Error, Result, Rng};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// How an action is drawn from a policy head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMode {
    Uniform,
    Stochastic,
    Deterministic,
}

pub fn select_action(policy: &GaussianHead, mode: ActionMode, rng: &mut Rng) -> Action {
    std::array::from_fn(|i| match mode {
        ActionMode::Uniform => rng.random_range(-1.0..=1.0),
        ActionMode::Stochastic => {
            let z: f64 = rng.sample(StandardNormal);
            (policy.mean[i] + policy.log_std[i].exp() * z).tanh()
        }
        ActionMode::Deterministic => policy.mean[i].tanh(),
    })
}

/// Transitions that share a head, stacked row-wise.
#[derive(Clone, Debug)]
pub struct Group {
    pub head: usize,
    pub obs: Mat,
    pub obs_action: Mat,
    pub reward: Mat,
    pub next_obs: Mat,
    pub not_done: Mat,
}

impl Group {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A sampled minibatch split by head; groups are ordered by head index.
#[derive(Clone, Debug)]
pub struct Batch {
    pub groups: Vec<Group>,
    pub size: usize,
}

fn stack(rows: &[&[f64]]) -> Mat {
    let d = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Array2::from_shape_vec((rows.len(), d), flat).expect("rows share a width")
}

fn column(values: impl Iterator<Item = f64>) -> Mat {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    Array2::from_shape_vec((n, 1), v).expect("column")
}

impl Batch {
    pub fn new(items: &[&Transition], head_of: impl Fn(usize) -> usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut by_head: BTreeMap<usize, Vec<&Transition>> = BTreeMap::new();
        for t in items {
            by_head.entry(head_of(t.task_id)).or_default().push(t);
        }
        let groups = by_head
            .into_iter()
            .map(|(head, ts)| {
                let obs: Vec<&[f64]> = ts.iter().map(|t| t.obs.as_slice()).collect();
                let next: Vec<&[f64]> = ts.iter().map(|t| t.next_obs.as_slice()).collect();
                let obs_action: Vec<Vec<f64>> = ts
                    .iter()
                    .map(|t| t.obs.iter().chain(&t.action).copied().collect())
                    .collect();
                let oa: Vec<&[f64]> = obs_action.iter().map(Vec::as_slice).collect();
                Group {
                    head,
                    obs: stack(&obs),
                    obs_action: stack(&oa),
                    reward: column(ts.iter().map(|t| t.reward)),
                    next_obs: stack(&next),
                    not_done: column(ts.iter().map(|t| if t.done { 0.0 } else { 1.0 })),
                }
            })
            .collect();
        Ok(Self {
            groups,
            size: items.len(),
        })
    }

    /// One standard-normal `n x ACTION_DIM` matrix per group.
    pub fn noise(&self, rng: &mut Rng) -> Vec<Mat> {
        self.groups
            .iter()
            .map(|g| Array2::from_shape_simple_fn((g.len(), ACTION_DIM), || rng.sample(StandardNormal)))
            .collect()
    }
}

/// Reparameterized tanh-Gaussian sample. Returns `(action, log_prob, log_std)`.
pub(crate) fn squashed_sample(
    tape: &mut Tape,
    net: &NetworkConfig,
    vars: &[Var],
    x: Var,
    head_idx: usize,
    eps: &Mat,
) -> (Var, Var, Var) {
    let h = trunk(tape, net, vars, x);
    let out = head(tape, net, vars, h, head_idx);
    let (mean, log_std) = split_gaussian(tape, out, ACTION_DIM);
    let std = tape.exp(log_std);
    let e = tape.constant(eps.clone());
    let shift = tape.mul(std, e);
    let u = tape.add(mean, shift);
    let action = tape.tanh(u);
    let base = eps
        .map_axis(Axis(1), |r| -0.5 * r.dot(&r) - ACTION_DIM as f64 * HALF_LN_2PI)
        .insert_axis(Axis(1));
    let base = tape.constant(base);
    let ls = tape.row_sum(log_std);
    // ln(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
    let m2u = tape.scale(u, -2.0);
    let sp = tape.softplus(m2u);
    let s = tape.add(u, sp);
    let s = tape.scale(s, -2.0);
    let s = tape.offset(s, 2.0 * LN_2);
    let jac = tape.row_sum(s);
    let lp = tape.sub(base, ls);
    let lp = tape.sub(lp, jac);
    (action, lp, log_std)
}

fn q_value(tape: &mut Tape, net: &NetworkConfig, vars: &[Var], x: Var, head_idx: usize) -> Var {
    let h = trunk(tape, net, vars, x);
    head(tape, net, vars, h, head_idx)
}

/// Gradients of one update, before any method-specific adjustment.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateGrads {
    pub actor: GradientVector,
    pub critics: [GradientVector; 2],
    pub log_alpha: Vec<f64>,
}

impl UpdateGrads {
    /// `[actor | critic 0 | critic 1]`
    pub fn flatten(&self) -> GradientVector {
        self.actor.concat(&self.critics[0]).concat(&self.critics[1])
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn set_flat(&mut self, flat: GradientVector) {
        let (actor, rest) = flat.split(self.actor.len());
        let (c0, c1) = rest.split(self.critics[0].len());
        self.actor = actor;
        self.critics = [c0, c1];
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Batch-average policy standard deviation.
    pub mean_std: f64,
    pub mean_q: f64,
}

/// Twin-critic soft actor-critic with one output head per task.
#[derive(Clone, Debug)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub actor_net: NetworkConfig,
    pub critic_net: NetworkConfig,
    pub actor: ParameterBlock,
    pub critics: [ParameterBlock; 2],
    pub targets: [ParameterBlock; 2],
    /// One entropy coefficient per head, stored as `ln alpha`.
    pub log_alpha: Vec<f64>,
    pub popart: Option<Vec<PopArtStats>>,
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub alpha_opt: Adam,
}

impl SacAgent {
    pub fn new(input_dim: usize, heads: usize, cfg: SacConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let actor_net = NetworkConfig::new(input_dim, heads, 2 * ACTION_DIM)
            .with_hidden(cfg.hidden_layers, cfg.hidden_width);
        let critic_net = NetworkConfig::new(input_dim + ACTION_DIM, heads, 1)
            .with_hidden(cfg.hidden_layers, cfg.hidden_width);
        actor_net.validate()?;
        let actor = actor_net.init(rng);
        let critics = [critic_net.init(rng), critic_net.init(rng)];
        let targets = critics.clone();
        let lr = cfg.learning_rate;
        Ok(Self {
            actor_opt: Adam::new(actor.total_count(), lr),
            critic_opts: [
                Adam::new(critics[0].total_count(), lr),
                Adam::new(critics[1].total_count(), lr),
            ],
            alpha_opt: Adam::new(heads, cfg.alpha_learning_rate),
            log_alpha: vec![cfg.init_log_alpha; heads],
            popart: None,
            cfg,
            actor_net,
            critic_net,
            actor,
            critics,
            targets,
        })
    }

    pub fn heads(&self) -> usize {
        self.actor_net.heads
    }

    pub fn enable_popart(&mut self) {
        self.popart = Some(vec![PopArtStats::default(); self.heads()]);
    }

    pub fn alpha(&self, head_idx: usize) -> f64 {
        self.log_alpha[head_idx].exp()
    }

    pub fn reset_optimizers(&mut self) {
        self.actor_opt.reset();
        self.critic_opts.iter_mut().for_each(Adam::reset);
        self.alpha_opt.reset();
    }

    /// Soft TD targets `r + gamma (1 - done) (min Q' - alpha log pi)` in
    /// unnormalized units, one column per group.
    pub fn td_targets(&self, actor: &ParameterBlock, batch: &Batch, noise: &[Mat]) -> Vec<Mat> {
        let mut tape = Tape::new();
        let av = actor.load(&mut tape, false);
        let t0 = self.targets[0].load(&mut tape, false);
        let t1 = self.targets[1].load(&mut tape, false);
        batch
            .groups
            .iter()
            .zip(noise)
            .map(|(g, eps)| {
                let x = tape.constant(g.next_obs.clone());
                let (a, lp, _) = squashed_sample(&mut tape, &self.actor_net, &av, x, g.head, eps);
                let xa = tape.concat(x, a);
                let q0 = q_value(&mut tape, &self.critic_net, &t0, xa, g.head);
                let q1 = q_value(&mut tape, &self.critic_net, &t1, xa, g.head);
                let q = tape.min(q0, q1);
                let mut q = tape.value(q).clone();
                if let Some(stats) = &self.popart {
                    let s = &stats[g.head];
                    q.mapv_inplace(|v| s.denormalize(v));
                }
                let soft = q - tape.value(lp) * self.alpha(g.head);
                &g.reward + &(&g.not_done * &soft * self.cfg.gamma)
            })
            .collect()
    }

    /// Updates each group's target statistics and rescales the matching
    /// critic heads (online and target) to preserve their outputs.
    pub fn popart_step(&mut self, batch: &Batch, targets: &[Mat]) -> Result<()> {
        let Some(stats) = self.popart.as_mut() else {
            return Ok(());
        };
        for (g, y) in batch.groups.iter().zip(targets) {
            let old = stats[g.head].clone();
            let new = old.updated(y.as_slice().expect("column is contiguous"))?;
            let (w, b) = self.critic_net.head_entries(g.head);
            for block in self.critics.iter_mut().chain(self.targets.iter_mut()) {
                let mut weights = block.slice(w).to_vec();
                let mut bias = block.slice(b).to_vec();
                rescale_head(&old, &new, &mut weights, &mut bias);
                block.slice_mut(w).copy_from_slice(&weights);
                block.slice_mut(b).copy_from_slice(&bias);
            }
            stats[g.head] = new;
        }
        Ok(())
    }

    /// Critic, actor and entropy-coefficient gradients at the current
    /// parameters, with the policy evaluated at `actor`.
    pub fn gradients(
        &self,
        actor: &ParameterBlock,
        batch: &Batch,
        noise: &[Mat],
        targets: &[Mat],
    ) -> Result<(UpdateGrads, Diagnostics)> {
        let inv_b = 1.0 / batch.size as f64;
        let mut diag = Diagnostics::default();

        let mut tape = Tape::new();
        let c0 = self.critics[0].load(&mut tape, true);
        let c1 = self.critics[1].load(&mut tape, true);
        let mut total: Option<Var> = None;
        let mut q_sum = 0.0;
        for (g, y) in batch.groups.iter().zip(targets) {
            let y = match &self.popart {
                Some(stats) => y.mapv(|v| stats[g.head].normalize(v)),
                None => y.clone(),
            };
            let x = tape.constant(g.obs_action.clone());
            let yv = tape.constant(y);
            for vars in [&c0, &c1] {
                let q = q_value(&mut tape, &self.critic_net, vars, x, g.head);
                q_sum += tape.value(q).sum();
                let d = tape.sub(q, yv);
                let sq = tape.square(d);
                let s = tape.sum(sq);
                total = Some(match total {
                    Some(t) => tape.add(t, s),
                    None => s,
                });
            }
        }
        let loss = tape.scale(total.expect("batch has a group"), inv_b);
        diag.critic_loss = tape.scalar(loss);
        diag.mean_q = 0.5 * q_sum * inv_b;
        if !diag.critic_loss.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        let grads = tape.backward(loss);
        let critics = [
            self.critics[0].collect_gradient(&grads, &c0),
            self.critics[1].collect_gradient(&grads, &c1),
        ];

        let mut tape = Tape::new();
        let av = actor.load(&mut tape, true);
        let c0 = self.critics[0].load(&mut tape, false);
        let c1 = self.critics[1].load(&mut tape, false);
        let mut total: Option<Var> = None;
        let mut log_alpha = vec![0.0; self.heads()];
        let mut std_sum = 0.0;
        for (g, eps) in batch.groups.iter().zip(noise) {
            let x = tape.constant(g.obs.clone());
            let (a, lp, log_std) = squashed_sample(&mut tape, &self.actor_net, &av, x, g.head, eps);
            let xa = tape.concat(x, a);
            let q0 = q_value(&mut tape, &self.critic_net, &c0, xa, g.head);
            let q1 = q_value(&mut tape, &self.critic_net, &c1, xa, g.head);
            let mut q = tape.min(q0, q1);
            if let Some(stats) = &self.popart {
                let s = &stats[g.head];
                q = tape.scale(q, s.std());
                q = tape.offset(q, s.mean);
            }
            let alpha = self.alpha(g.head);
            let ent = tape.scale(lp, alpha);
            let d = tape.sub(ent, q);
            let s = tape.sum(d);
            total = Some(match total {
                Some(t) => tape.add(t, s),
                None => s,
            });
            let group_std: f64 = tape.value(log_std).iter().map(|v| v.exp()).sum();
            std_sum += group_std;
            let avg = group_std / (g.len() * ACTION_DIM) as f64;
            log_alpha[g.head] = alpha * (avg - self.cfg.target_std);
        }
        let loss = tape.scale(total.expect("batch has a group"), inv_b);
        diag.actor_loss = tape.scalar(loss);
        diag.mean_std = std_sum * inv_b / ACTION_DIM as f64;
        if !diag.actor_loss.is_finite() {
            return Err(Error::NonFinite("actor loss".into()));
        }
        let grads = tape.backward(loss);
        let actor_grad = actor.collect_gradient(&grads, &av);
        Ok((
            UpdateGrads {
                actor: actor_grad,
                critics,
                log_alpha,
            },
            diag,
        ))
    }

    /// Applies one optimizer step to every network, then moves the target
    /// critics toward the online critics. Entries with `actor_active[i] ==
    /// false` are left exactly as they are.
    pub fn apply(&mut self, grads: &UpdateGrads, actor_active: Option<&[bool]>) {
        match actor_active {
            Some(mask) => self
                .actor_opt
                .step_masked(self.actor.values_mut(), &grads.actor.values, mask),
            None => self.actor_opt.step(self.actor.values_mut(), &grads.actor.values),
        }
        for i in 0..2 {
            self.critic_opts[i].step(self.critics[i].values_mut(), &grads.critics[i].values);
        }
        self.alpha_opt.step(&mut self.log_alpha, &grads.log_alpha);
        let (lo, hi) = (self.cfg.alpha_min.ln(), self.cfg.alpha_max.ln());
        self.log_alpha.iter_mut().for_each(|a| *a = a.clamp(lo, hi));
        self.polyak();
    }

    fn polyak(&mut self) {
        let p = self.cfg.polyak;
        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            t.values_mut()
                .iter_mut()
                .zip(c.values())
                .for_each(|(t, c)| *t = p * *t + (1.0 - p) * c);
        }
    }
}
