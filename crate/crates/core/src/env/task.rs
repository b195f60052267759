use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Rng};

/// Half-width of the cubic workspace `[-1, 1]^3`.
pub const WORKSPACE: f64 = 1.0;

/// Entity whose distance to the goal defines reward and success.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetEntity {
    Effector,
    Object,
}

/// Axis-aligned box sampled uniformly; `low == high` pins a coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub low: [f64; 3],
    pub high: [f64; 3],
}

impl BoxRegion {
    pub fn point(p: [f64; 3]) -> Self {
        Self { low: p, high: p }
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|i| 0.5 * (self.low[i] + self.high[i]))
    }

    pub fn sample(&self, rng: &mut Rng) -> [f64; 3] {
        std::array::from_fn(|i| {
            let (lo, hi) = (self.low[i], self.high[i]);
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for i in 0..3 {
            let (lo, hi) = (self.low[i], self.high[i]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err("non-finite sampler bound".into());
            }
            if lo > hi {
                return Err(format!("sampler low {lo} exceeds high {hi} on axis {i}"));
            }
            if lo < -WORKSPACE || hi > WORKSPACE {
                return Err(format!("sampler axis {i} leaves the workspace"));
            }
        }
        Ok(())
    }
}

/// One synthetic manipulation task.
///
/// `axis_map` is a signed permutation written with 1-based axes: entry `j`
/// equal to `-2` means world axis `j` moves opposite to action component 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub axis_map: [i8; 3],
    pub control_gain: f64,
    pub target_entity: TargetEntity,
    pub goal_sampler: BoxRegion,
    pub object_sampler: BoxRegion,
    pub success_eps: f64,
    pub reward_scale: f64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::TaskSpec {
            name: self.name.clone(),
            reason,
        };
        if self.name.is_empty() {
            return Err(fail("empty name".into()));
        }
        let mut seen = [false; 3];
        for &a in &self.axis_map {
            let idx = a.unsigned_abs() as usize;
            if !(1..=3).contains(&idx) || seen[idx - 1] {
                return Err(fail(format!("axis_map {:?} is not a signed permutation", self.axis_map)));
            }
            seen[idx - 1] = true;
        }
        if !self.control_gain.is_finite() || self.control_gain == 0.0 {
            return Err(fail("control_gain must be finite and non-zero".into()));
        }
        if !(self.success_eps.is_finite() && self.success_eps > 0.0) {
            return Err(fail("success_eps must be positive".into()));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(fail("reward_scale must be positive".into()));
        }
        self.goal_sampler.validate().map_err(&fail)?;
        self.object_sampler.validate().map_err(&fail)?;
        Ok(())
    }

    /// Determinant of the signed permutation matrix (always +1 or -1).
    pub fn axis_determinant(&self) -> i32 {
        let perm: Vec<usize> = self.axis_map.iter().map(|a| a.unsigned_abs() as usize - 1).collect();
        let mut inversions = 0;
        for i in 0..3 {
            for j in i + 1..3 {
                if perm[i] > perm[j] {
                    inversions += 1;
                }
            }
        }
        let signs: i32 = self.axis_map.iter().map(|&a| if a < 0 { -1 } else { 1 }).product();
        if inversions % 2 == 0 {
            signs
        } else {
            -signs
        }
    }

    /// World-frame displacement for a (clipped) 3-D control.
    pub fn displacement(&self, control: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|j| {
            let a = self.axis_map[j];
            let src = a.unsigned_abs() as usize - 1;
            let sign = if a < 0 { -1.0 } else { 1.0 };
            sign * control[src].clamp(-1.0, 1.0) * self.control_gain
        })
    }
}

/// Parses a suite file: a JSON array of task specs.
pub fn parse_suite(json: &str) -> Result<Vec<TaskSpec>> {
    let specs: Vec<TaskSpec> = serde_json::from_str(json)?;
    if specs.is_empty() {
        return Err(Error::Format("suite contains no tasks".into()));
    }
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

pub fn load_suite(path: &std::path::Path) -> Result<Vec<TaskSpec>> {
    parse_suite(&std::fs::read_to_string(path)?)
}
