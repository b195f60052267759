use super::task::{TargetEntity, TaskSpec, WORKSPACE};
use crate::{Error, Result, Rng};

pub const OBS_DIM: usize = 12;
pub const ACTION_DIM: usize = 4;
pub const EPISODE_LEN: usize = 200;
pub const GRASP_RADIUS: f64 = 0.1;
pub const EFFECTOR_START: [f64; 3] = [0.0, 0.0, 0.5];

pub type Observation = [f64; OBS_DIM];
pub type Action = [f64; ACTION_DIM];

/// Simulator state of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub effector: [f64; 3],
    pub object: [f64; 3],
    pub goal: [f64; 3],
    pub step_count: usize,
    pub succeeded_this_episode: bool,
}

/// One stored interaction, tagged with the task it came from.
///
/// `done` marks true terminal states only; the fixed 200-step horizon is a
/// time limit and never cuts bootstrapping.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub task_id: usize,
}

/// Result of a single [`step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

impl EnvState {
    /// `[effector, object, 0, 0, 0, goal]`
    pub fn observation(&self) -> Observation {
        let mut o = [0.0; OBS_DIM];
        o[0..3].copy_from_slice(&self.effector);
        o[3..6].copy_from_slice(&self.object);
        o[9..12].copy_from_slice(&self.goal);
        o
    }

    pub fn target(&self, spec: &TaskSpec) -> [f64; 3] {
        match spec.target_entity {
            TargetEntity::Effector => self.effector,
            TargetEntity::Object => self.object,
        }
    }

    pub fn target_distance(&self, spec: &TaskSpec) -> f64 {
        distance(self.target(spec), self.goal)
    }

    pub fn is_done(&self) -> bool {
        self.step_count >= EPISODE_LEN
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Shaped reward `1 - tanh(d / scale)`.
pub fn reward(spec: &TaskSpec, dist: f64) -> f64 {
    1.0 - (dist / spec.reward_scale).tanh()
}

/// Binary success: strictly closer than `success_eps`.
pub fn is_success(spec: &TaskSpec, dist: f64) -> bool {
    dist < spec.success_eps
}

/// Starts an episode: effector at its fixed start, object and goal sampled.
pub fn reset(spec: &TaskSpec, rng: &mut Rng) -> (EnvState, Observation) {
    let object = spec.object_sampler.sample(rng);
    let goal = spec.goal_sampler.sample(rng);
    let state = EnvState {
        effector: EFFECTOR_START,
        object,
        goal,
        step_count: 0,
        succeeded_this_episode: false,
    };
    let obs = state.observation();
    (state, obs)
}

/// Advances the episode by one control step.
pub fn step(state: &mut EnvState, spec: &TaskSpec, action: &[f64]) -> Result<StepOutcome> {
    if state.is_done() {
        return Err(Error::EpisodeDone(state.step_count));
    }
    if action.len() != ACTION_DIM {
        return Err(Error::Dimension {
            what: "action",
            expected: ACTION_DIM,
            got: action.len(),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }
    let grasped = distance(state.effector, state.object) < GRASP_RADIUS && action[3] > 0.0;
    let delta = spec.displacement([action[0], action[1], action[2]]);
    let before = state.effector;
    for i in 0..3 {
        state.effector[i] = (state.effector[i] + delta[i]).clamp(-WORKSPACE, WORKSPACE);
    }
    if grasped {
        for i in 0..3 {
            let moved = state.effector[i] - before[i];
            state.object[i] = (state.object[i] + moved).clamp(-WORKSPACE, WORKSPACE);
        }
    }
    state.step_count += 1;
    let dist = state.target_distance(spec);
    let success = is_success(spec, dist);
    state.succeeded_this_episode |= success;
    Ok(StepOutcome {
        obs: state.observation(),
        reward: reward(spec, dist),
        done: state.is_done(),
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::task::BoxRegion;
    use rand::SeedableRng;

    fn spec(entity: TargetEntity) -> TaskSpec {
        TaskSpec {
            name: "t".into(),
            axis_map: [1, 2, 3],
            control_gain: 0.05,
            target_entity: entity,
            goal_sampler: BoxRegion::point([0.5, 0.0, 0.5]),
            object_sampler: BoxRegion::point([0.1, -0.2, 0.3]),
            success_eps: 0.05,
            reward_scale: 0.3,
        }
    }

    #[test]
    fn reset_with_point_samplers() {
        let s = spec(TargetEntity::Effector);
        let (_, obs) = reset(&s, &mut Rng::seed_from_u64(0));
        assert_eq!(obs, [0.0, 0.0, 0.5, 0.1, -0.2, 0.3, 0.0, 0.0, 0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let mut s = spec(TargetEntity::Effector);
        s.goal_sampler = BoxRegion {
            low: [-0.5, -0.5, 0.0],
            high: [0.5, 0.5, 1.0],
        };
        let a = reset(&s, &mut Rng::seed_from_u64(9)).1;
        let b = reset(&s, &mut Rng::seed_from_u64(9)).1;
        assert_eq!(a, b);
    }

    #[test]
    fn goal_mean_matches_box_center() {
        let mut s = spec(TargetEntity::Effector);
        s.goal_sampler = BoxRegion {
            low: [-0.4, 0.0, 0.2],
            high: [0.2, 0.6, 0.9],
        };
        let mut rng = Rng::seed_from_u64(1);
        let n = 10_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let (st, _) = reset(&s, &mut rng);
            for i in 0..3 {
                sum[i] += st.goal[i];
            }
        }
        let c = s.goal_sampler.center();
        for i in 0..3 {
            let width = s.goal_sampler.high[i] - s.goal_sampler.low[i];
            let sigma = width / 12f64.sqrt() / (n as f64).sqrt();
            assert!((sum[i] / n as f64 - c[i]).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn at_goal_with_zero_action() {
        let mut s = spec(TargetEntity::Effector);
        s.goal_sampler = BoxRegion::point(EFFECTOR_START);
        let (mut st, _) = reset(&s, &mut Rng::seed_from_u64(0));
        let out = step(&mut st, &s, &[0.0; 4]).unwrap();
        assert!(out.success);
        assert_eq!(out.reward, 1.0);
        assert!(st.succeeded_this_episode);
    }

    #[test]
    fn success_threshold_is_strict() {
        let mut s = spec(TargetEntity::Effector);
        s.success_eps = 0.25;
        s.goal_sampler = BoxRegion::point([0.0, 0.0, 0.75]);
        let (mut st, _) = reset(&s, &mut Rng::seed_from_u64(0));
        assert_eq!(st.target_distance(&s), 0.25);
        let out = step(&mut st, &s, &[0.0; 4]).unwrap();
        assert!(!out.success);
    }

    #[test]
    fn straight_push_reaches_goal_within_eleven_steps() {
        // Closed form: distance after k unit steps is 0.5 - 0.05 k, so success
        // needs 0.5 - 0.05 k < 0.05, i.e. k >= 10 (k = 9 lands exactly on eps).
        let s = spec(TargetEntity::Effector);
        let (mut st, _) = reset(&s, &mut Rng::seed_from_u64(0));
        let mut hit = None;
        for k in 1..=EPISODE_LEN {
            if step(&mut st, &s, &[1.0, 0.0, 0.0, 0.0]).unwrap().success {
                hit = Some(k);
                break;
            }
        }
        let k = hit.expect("goal reached");
        assert!((9..=11).contains(&k), "reached at step {k}");
    }

    #[test]
    fn grasped_object_follows_effector() {
        let mut s = spec(TargetEntity::Object);
        s.object_sampler = BoxRegion::point([0.0, 0.0, 0.45]);
        let (mut st, _) = reset(&s, &mut Rng::seed_from_u64(0));
        step(&mut st, &s, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((st.object[0] - 0.05).abs() < 1e-15);
        step(&mut st, &s, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!((st.object[0] - 0.05).abs() < 1e-15);
        assert!((st.effector[0] - 0.10).abs() < 1e-15);
    }

    #[test]
    fn episode_lasts_exactly_200_steps() {
        let s = spec(TargetEntity::Effector);
        let (mut st, _) = reset(&s, &mut Rng::seed_from_u64(0));
        for k in 1..=EPISODE_LEN {
            let out = step(&mut st, &s, &[0.3, -0.2, 0.1, 0.0]).unwrap();
            assert_eq!(out.done, k == EPISODE_LEN);
        }
        assert!(matches!(step(&mut st, &s, &[0.0; 4]), Err(Error::EpisodeDone(200))));
    }

    #[test]
    fn effector_stays_in_workspace() {
        let s = spec(TargetEntity::Effector);
        let (mut st, _) = reset(&s, &mut Rng::seed_from_u64(0));
        for _ in 0..EPISODE_LEN {
            let out = step(&mut st, &s, &[5.0, -5.0, 5.0, 0.0]).unwrap();
            assert!(out.obs.iter().all(|v| v.abs() <= 1.0));
            assert!(out.reward > 0.0 && out.reward <= 1.0);
        }
    }
}
