use super::agent::{Batch, Diagnostics, SacAgent};
use super::buffer::ReplayBuffer;
use super::train::HeadMode;
use crate::cl::{
    agem_project, packnet_mask_gradients, quadratic_penalty_grad, vcl_kl_grad, vcl_sample, MethodState,
    PenaltyTerm,
};
use crate::nn::GradientVector;
use crate::{Error, Result, Rng};

fn add_penalty(g: &mut GradientVector, params: &[f64], term: &Option<PenaltyTerm>, lambda: f64) -> Result<()> {
    if let Some(t) = term {
        let p = quadratic_penalty_grad(params, &t.anchor, &t.importance, lambda)?;
        g.values.iter_mut().zip(&p).for_each(|(g, p)| *g += p);
    }
    Ok(())
}

/// One gradient step on the twin critics, the actor and the entropy
/// coefficients, with the continual-learning method's adjustments.
///
/// `task_id` is the task being trained; transitions in the batch select
/// their own heads.
pub fn sac_update(
    agent: &mut SacAgent,
    buffer: &ReplayBuffer,
    method: &mut MethodState,
    task_id: usize,
    heads: HeadMode,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Diagnostics> {
    if buffer.len() < batch_size {
        return Err(Error::BufferUnderflow {
            have: buffer.len(),
            need: batch_size,
        });
    }
    let items = buffer.sample(batch_size, rng)?;
    let batch = Batch::new(&items, |t| heads.head(t))?;
    let next = batch.noise(rng);
    let cur = batch.noise(rng);

    let sampled = match method {
        MethodState::Vcl(v) => {
            let (theta, z) = vcl_sample(&v.posterior, rng);
            Some((agent.actor.with_values(theta)?, z))
        }
        _ => None,
    };
    let y = agent.td_targets(sampled.as_ref().map_or(&agent.actor, |s| &s.0), &batch, &next);
    agent.popart_step(&batch, &y)?;
    let (mut grads, diag) = agent.gradients(sampled.as_ref().map_or(&agent.actor, |s| &s.0), &batch, &cur, &y)?;

    let mut actor_mask = None;
    let mut log_std_grad = None;
    match method {
        MethodState::Plain => {}
        MethodState::Quadratic(q) => {
            if q.lambda > 0.0 {
                add_penalty(&mut grads.actor, agent.actor.values(), &q.actor, q.lambda)?;
                if let Some(terms) = &q.critics {
                    for i in 0..2 {
                        add_penalty(&mut grads.critics[i], agent.critics[i].values(), &terms[i], q.lambda)?;
                    }
                }
            }
        }
        MethodState::Vcl(v) => {
            let (_, z) = sampled.as_ref().expect("vcl draws a sample");
            let mut dls: Vec<f64> = grads
                .actor
                .values
                .iter()
                .zip(&v.posterior.log_std)
                .zip(z)
                .map(|((g, l), z)| g * l.exp() * z)
                .collect();
            if v.has_prior && v.lambda > 0.0 {
                let (km, kl) = vcl_kl_grad(&v.posterior)?;
                grads.actor.values.iter_mut().zip(&km).for_each(|(g, k)| *g += v.lambda * k);
                dls.iter_mut().zip(&kl).for_each(|(g, k)| *g += v.lambda * k);
            }
            log_std_grad = Some(dls);
        }
        MethodState::PackNet(p) => {
            let head = heads.head(task_id);
            grads.actor = packnet_mask_gradients(&grads.actor, &p.masks, task_id, head, p.phase, p.max_norm);
            actor_mask = Some(p.masks.active(task_id, head, p.phase));
        }
        MethodState::Agem(a) => {
            if a.memory.len_before(task_id) > 0 {
                let old = a.memory.sample_before(task_id, a.episodic_batch, rng)?;
                let ob = Batch::new(&old, |t| heads.head(t))?;
                let on = ob.noise(rng);
                let oc = ob.noise(rng);
                let oy = agent.td_targets(&agent.actor, &ob, &on);
                let (og, _) = agent.gradients(&agent.actor, &ob, &oc, &oy)?;
                let (projected, _) = agem_project(&grads.flatten(), &og.flatten());
                grads.set_flat(projected);
            }
        }
    }
    if !grads.flatten().is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    agent.apply(&grads, actor_mask.as_deref());
    if let (MethodState::Vcl(v), Some(dls)) = (method, log_std_grad) {
        v.log_std_opt.step(&mut v.posterior.log_std, &dls);
        v.posterior.mean = agent.actor.values().to_vec();
    }
    Ok(diag)
}
