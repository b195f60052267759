//! Per-method metric tables over finished runs.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use serde::Serialize;

use super::bootstrap::{seed_interval, DEFAULT_RESAMPLES};
use super::cl::{average_performance, backward_transfer, forgetting, forward_transfer, mean_over_tasks, TrainingCurve};
use super::log::{parse_jsonl, PerformanceLog};
use crate::runner::RunManifest;
use crate::{Error, Result, Rng};

/// Confidence level of every reported interval.
pub const CI_LEVEL: f64 = 0.9;

/// Completed seeds of one result directory.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub logs: Vec<PerformanceLog>,
}

impl LoadedRun {
    /// Method name with any active ablations appended.
    pub fn label(&self) -> String {
        let f = self.manifest.config.flags;
        let mut s = self.manifest.config.method.name().to_string();
        for (on, name) in [
            (f.single_head_onehot, "onehot"),
            (f.no_buffer_reset, "no_buffer_reset"),
            (f.no_random_exploration, "no_random_exploration"),
            (f.critic_regularization, "critic_reg"),
        ] {
            if on {
                s.push('+');
                s.push_str(name);
            }
        }
        s
    }
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest = RunManifest::read(dir)?;
    let tasks = manifest.tasks.len();
    let delta = manifest.steps_per_task as u64;
    let mut logs = Vec::new();
    for s in manifest.seeds.iter().filter(|s| s.completed) {
        let text = std::fs::read_to_string(dir.join(&s.log))?;
        logs.push(PerformanceLog::from_records(&parse_jsonl(&text)?, tasks, delta)?);
    }
    Ok(LoadedRun { manifest, logs })
}

/// Single-task reference curves by task name, averaged over every seed of
/// every given run.
pub fn reference_curves(dirs: &[&Path]) -> Result<HashMap<String, TrainingCurve>> {
    let mut by_task: HashMap<String, Vec<TrainingCurve>> = HashMap::new();
    for dir in dirs {
        let run = load_run(dir)?;
        if run.manifest.tasks.len() != 1 {
            return Err(Error::Format(format!("{} is not a single-task run", dir.display())));
        }
        for log in &run.logs {
            by_task
                .entry(run.manifest.tasks[0].clone())
                .or_default()
                .push(log.training_curve(0)?);
        }
    }
    by_task
        .into_iter()
        .map(|(k, cs)| Ok((k, TrainingCurve::mean(&cs)?)))
        .collect()
}

/// Point estimate with a bootstrap interval across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl Estimate {
    fn of(samples: &[f64], rng: &mut Rng) -> Result<Self> {
        let (low, high) = seed_interval(samples, CI_LEVEL, DEFAULT_RESAMPLES, rng)?;
        Ok(Self {
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            low,
            high,
        })
    }
}

/// One table row. Sequential-only metrics are absent for multi-task runs;
/// forward transfer is absent when a reference curve is missing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub seeds: usize,
    pub performance: Estimate,
    pub forgetting: Option<Estimate>,
    pub forward_transfer: Option<Estimate>,
    pub backward_transfer: Option<Estimate>,
}

/// Per-seed forward transfer averaged over tasks, if every task has a
/// reference.
fn seed_forward_transfer(
    log: &PerformanceLog,
    names: &[String],
    refs: &HashMap<String, TrainingCurve>,
) -> Result<Option<f64>> {
    let mut s = 0.0;
    for (i, name) in names.iter().enumerate() {
        let Some(r) = refs.get(name) else {
            return Ok(None);
        };
        s += forward_transfer(&log.training_curve(i)?, r)?;
    }
    Ok(Some(s / names.len() as f64))
}

/// Aggregates runs by label (method plus ablations).
pub fn summarize(runs: &[LoadedRun], refs: &HashMap<String, TrainingCurve>) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<String, Vec<&LoadedRun>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.label()).or_default().push(r);
    }
    let mut rng = Rng::seed_from_u64(0);
    let mut rows = Vec::new();
    for (method, group) in groups {
        let sequential = !group[0].manifest.config.method.is_multitask();
        let (mut p, mut f, mut b, mut ft) = (vec![], vec![], vec![], Some(vec![]));
        for run in &group {
            for log in &run.logs {
                p.push(average_performance(log, log.total_steps())?);
                if sequential {
                    f.push(mean_over_tasks(log, forgetting)?);
                    b.push(mean_over_tasks(log, backward_transfer)?);
                    match (seed_forward_transfer(log, &run.manifest.tasks, refs)?, ft.as_mut()) {
                        (Some(v), Some(acc)) => acc.push(v),
                        _ => ft = None,
                    }
                }
            }
        }
        if p.is_empty() {
            return Err(Error::Format(format!("no completed seeds for {method}")));
        }
        let opt = |xs: &[f64], rng: &mut Rng| -> Result<Option<Estimate>> {
            if sequential && !xs.is_empty() {
                Estimate::of(xs, rng).map(Some)
            } else {
                Ok(None)
            }
        };
        rows.push(SummaryRow {
            method,
            seeds: p.len(),
            performance: Estimate::of(&p, &mut rng)?,
            forgetting: opt(&f, &mut rng)?,
            forward_transfer: opt(ft.as_deref().unwrap_or(&[]), &mut rng)?,
            backward_transfer: opt(&b, &mut rng)?,
        });
    }
    Ok(rows)
}

/// CSV with a mean, low and high column per metric; absent metrics are
/// left empty.
pub fn to_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("method,seeds");
    for m in ["performance", "forgetting", "f_transfer", "b_transfer"] {
        write!(s, ",{m},{m}_low,{m}_high").expect("write to string");
    }
    s.push('\n');
    for r in rows {
        write!(s, "{},{}", r.method, r.seeds).expect("write to string");
        for e in [Some(r.performance), r.forgetting, r.forward_transfer, r.backward_transfer] {
            match e {
                Some(e) => write!(s, ",{},{},{}", e.mean, e.low, e.high),
                None => write!(s, ",,,"),
            }
            .expect("write to string");
        }
        s.push('\n');
    }
    s
}
