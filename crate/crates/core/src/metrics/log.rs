use serde::{Deserialize, Serialize};

use crate::runner::AblationFlags;
use crate::{Error, Result};

/// One line of an evaluation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub step: u64,
    pub task_id: usize,
    pub success_rate: f64,
    pub seed: u64,
    pub method: String,
    #[serde(default)]
    pub flags: AblationFlags,
}

/// Parses a JSONL evaluation log; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EvalRecord = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("log line {}: {e}", i + 1)))?;
        if !(0.0..=1.0).contains(&r.success_rate) {
            return Err(Error::Format(format!(
                "log line {}: success_rate {} outside [0, 1]",
                i + 1,
                r.success_rate
            )));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn to_jsonl(records: &[EvalRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Success curves `p_i(t)` of one seed on a shared checkpoint grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceLog {
    pub tasks: usize,
    /// Steps per task.
    pub delta: u64,
    pub checkpoints: Vec<u64>,
    /// `values[i][c]` is the success rate of task `i` at `checkpoints[c]`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

impl PerformanceLog {
    pub fn new(tasks: usize, delta: u64, checkpoints: Vec<u64>, values: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let log = Self {
            tasks,
            delta,
            checkpoints,
            values,
            seed,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if self.tasks == 0 || self.delta == 0 {
            return bad("log needs at least one task and a positive delta".into());
        }
        if self.checkpoints.is_empty() || self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoints must be non-empty and strictly increasing".into());
        }
        let total = self.delta * self.tasks as u64;
        if *self.checkpoints.last().expect("non-empty") != total {
            return bad(format!("final checkpoint must equal tasks * delta = {total}"));
        }
        if self.values.len() != self.tasks {
            return bad(format!("{} curves for {} tasks", self.values.len(), self.tasks));
        }
        for (i, curve) in self.values.iter().enumerate() {
            if curve.len() != self.checkpoints.len() {
                return bad(format!("curve {i} has {} points, grid has {}", curve.len(), self.checkpoints.len()));
            }
            if curve.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("curve {i} leaves [0, 1]"));
            }
        }
        Ok(())
    }

    /// Assembles a log from records of a single seed.
    pub fn from_records(records: &[EvalRecord], tasks: usize, delta: u64) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::Format("empty log".into()))?;
        let seed = first.seed;
        let mut checkpoints: Vec<u64> = records.iter().map(|r| r.step).collect();
        checkpoints.sort_unstable();
        checkpoints.dedup();
        let mut values = vec![vec![f64::NAN; checkpoints.len()]; tasks];
        for r in records {
            if r.seed != seed {
                return Err(Error::Format(format!("log mixes seeds {seed} and {}", r.seed)));
            }
            if r.task_id >= tasks {
                return Err(Error::Index { index: r.task_id, len: tasks });
            }
            let c = checkpoints.binary_search(&r.step).expect("step is on the grid");
            values[r.task_id][c] = r.success_rate;
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Format("log is missing task evaluations at some checkpoint".into()));
        }
        Self::new(tasks, delta, checkpoints, values, seed)
    }

    pub fn total_steps(&self) -> u64 {
        self.delta * self.tasks as u64
    }

    /// Index of the checkpoint nearest to `t` in `[0, T]`; ties resolve to
    /// the earlier one.
    pub fn nearest(&self, t: u64) -> Result<usize> {
        let last = *self.checkpoints.last().expect("validated");
        if t > last {
            return Err(Error::Index {
                index: t as usize,
                len: last as usize,
            });
        }
        let pos = self.checkpoints.partition_point(|&c| c < t);
        if pos == 0 {
            return Ok(0);
        }
        if pos == self.checkpoints.len() {
            return Ok(pos - 1);
        }
        let (lo, hi) = (self.checkpoints[pos - 1], self.checkpoints[pos]);
        Ok(if t - lo <= hi - t { pos - 1 } else { pos })
    }
}
