//! Pairwise transfer matrices and the reference transfer of a sequence.

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{seed_interval, DEFAULT_RESAMPLES};
use super::cl::{forward_transfer, TrainingCurve};
use super::log::PerformanceLog;
use crate::cl::Method;
use crate::env::TaskSpec;
use crate::runner::{run_seed, Control, ExperimentConfig};
use crate::{Error, Result, Rng};

/// `entries[j][i]` is the forward transfer to task `i` after pretraining
/// on task `j`; `None` marks a cell whose runs failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferMatrix {
    pub tasks: Vec<String>,
    pub entries: Vec<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<Vec<[f64; 2]>>>,
}

impl TransferMatrix {
    pub fn parse(json: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(json)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tasks.len();
        if n == 0 {
            return Err(Error::Format("transfer matrix has no tasks".into()));
        }
        if self.entries.len() != n || self.entries.iter().any(|r| r.len() != n) {
            return Err(Error::Format(format!("transfer matrix must be {n}x{n}")));
        }
        if let Some(v) = self.entries.iter().flatten().flatten().find(|v| !(v.is_finite() && **v <= 1.0)) {
            return Err(Error::Format(format!("transfer entry {v} must be finite and at most 1")));
        }
        if let Some(c) = &self.confidence {
            if c.len() != n || c.iter().any(|r| r.len() != n) {
                return Err(Error::Format(format!("confidence must be {n}x{n}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, from: usize, to: usize) -> Result<f64> {
        let n = self.tasks.len();
        for index in [from, to] {
            if index >= n {
                return Err(Error::Index { index, len: n });
            }
        }
        self.entries[from][to].ok_or_else(|| {
            Error::IllDefined(format!("transfer {} -> {} failed to run", self.tasks[from], self.tasks[to]))
        })
    }

    /// Matrix indices of the named tasks.
    pub fn indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.tasks
                    .iter()
                    .position(|t| t == n)
                    .ok_or_else(|| Error::Format(format!("task `{n}` is not in the transfer matrix")))
            })
            .collect()
    }
}

/// `(1/N) sum_{i>=2} max_{j<i} FT(s_j, s_i)` over the sequence `s`.
///
/// The divisor is the sequence length although only `N - 1` terms are
/// summed.
pub fn reference_transfer(matrix: &TransferMatrix, sequence: &[usize]) -> Result<f64> {
    if sequence.len() < 2 {
        return Err(Error::Config("reference transfer needs at least two tasks".into()));
    }
    let mut total = 0.0;
    for i in 1..sequence.len() {
        let mut best = f64::NEG_INFINITY;
        for j in 0..i {
            best = best.max(matrix.get(sequence[j], sequence[i])?);
        }
        total += best;
    }
    Ok(total / sequence.len() as f64)
}

/// A computed matrix with its bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrixRun {
    pub matrix: TransferMatrix,
    /// Single-task reference curves, averaged over seeds.
    pub references: Vec<Option<TrainingCurve>>,
    /// Training runs executed per seed.
    pub runs_per_seed: usize,
    pub failures: Vec<String>,
}

/// Second-task training curve of one fine-tuning run over `tasks`.
fn curve_of(cfg: &ExperimentConfig, tasks: &[TaskSpec], seed: u64) -> Result<TrainingCurve> {
    let run = run_seed(cfg, tasks, seed, None, |_| Control::Continue)?;
    let log = PerformanceLog::from_records(&run.records, tasks.len(), cfg.steps_per_task as u64)?;
    log.training_curve(tasks.len() - 1)
}

/// Fine-tunes every ordered pair of `suite` and scores the second task
/// against single-task references. Runs use `base` with the method forced
/// to fine-tuning; flags and scale are kept.
pub fn build_transfer_matrix(suite: &[TaskSpec], base: &ExperimentConfig) -> Result<TransferMatrixRun> {
    let n = suite.len();
    if n == 0 {
        return Err(Error::Config("transfer matrix needs a non-empty suite".into()));
    }
    let mut cfg = base.clone();
    cfg.method = Method::FineTune;
    cfg.sac.validate()?;
    cfg.hyperparams.validate(cfg.method)?;
    if cfg.seeds.is_empty() || !cfg.steps_per_task.is_multiple_of(cfg.sac.eval_every) {
        return Err(Error::Config("transfer matrix needs seeds and steps_per_task a multiple of eval_every".into()));
    }
    // Job `k < n` is the reference for task `k`; the rest are pairs.
    let jobs: Vec<(usize, u64)> = (0..n + n * n)
        .flat_map(|k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let curves: Vec<Result<TrainingCurve>> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            if k < n {
                curve_of(&cfg, &suite[k..=k], seed)
            } else {
                let (j, i) = ((k - n) / n, (k - n) % n);
                curve_of(&cfg, &[suite[j].clone(), suite[i].clone()], seed)
            }
        })
        .collect();
    let seeds = cfg.seeds.len();
    let group = |k: usize| &curves[k * seeds..(k + 1) * seeds];
    let mut failures = Vec::new();
    let mut references = Vec::with_capacity(n);
    for (k, spec) in suite.iter().enumerate() {
        let ok: Result<Vec<TrainingCurve>> = group(k).iter().map(|r| r.as_ref().cloned().map_err(clone_err)).collect();
        match ok.and_then(|cs| TrainingCurve::mean(&cs)) {
            Ok(c) => references.push(Some(c)),
            Err(e) => {
                failures.push(format!("reference {}: {e}", spec.name));
                references.push(None);
            }
        }
    }
    let mut entries = vec![vec![None; n]; n];
    let mut confidence = vec![vec![[f64::NAN; 2]; n]; n];
    for j in 0..n {
        for i in 0..n {
            let cell = || -> Result<(f64, (f64, f64))> {
                let reference = references[i]
                    .as_ref()
                    .ok_or_else(|| Error::IllDefined(format!("no reference for {}", suite[i].name)))?;
                let fts = group(n + j * n + i)
                    .iter()
                    .map(|r| forward_transfer(r.as_ref().map_err(clone_err)?, reference))
                    .collect::<Result<Vec<f64>>>()?;
                let mean = fts.iter().sum::<f64>() / fts.len() as f64;
                let mut rng = Rng::seed_from_u64((j * n + i) as u64);
                Ok((mean, seed_interval(&fts, 0.9, DEFAULT_RESAMPLES, &mut rng)?))
            };
            match cell() {
                Ok((m, (lo, hi))) => {
                    entries[j][i] = Some(m);
                    confidence[j][i] = [lo, hi];
                }
                Err(e) => failures.push(format!("{} -> {}: {e}", suite[j].name, suite[i].name)),
            }
        }
    }
    let matrix = TransferMatrix {
        tasks: suite.iter().map(|t| t.name.clone()).collect(),
        entries,
        confidence: failures.is_empty().then_some(confidence),
    };
    Ok(TransferMatrixRun {
        matrix,
        references,
        runs_per_seed: n + n * n,
        failures,
    })
}

fn clone_err(e: &Error) -> Error {
    Error::IllDefined(e.to_string())
}
