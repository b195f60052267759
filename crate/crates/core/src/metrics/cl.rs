//! Performance, forward transfer, forgetting and backward transfer.

use serde::{Deserialize, Serialize};

use super::log::PerformanceLog;
use crate::{Error, Result};

/// Checkpoints averaged around each forgetting endpoint.
pub const SMOOTHING_WINDOW: usize = 5;

/// `(1/N) sum_i p_i(t)` at the checkpoint nearest to `t`.
pub fn average_performance(log: &PerformanceLog, t: u64) -> Result<f64> {
    let c = log.nearest(t)?;
    Ok(log.values.iter().map(|v| v[c]).sum::<f64>() / log.tasks as f64)
}

/// Success curve over one training window, with steps measured from the
/// window start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub steps: Vec<u64>,
    pub values: Vec<f64>,
}

impl TrainingCurve {
    pub fn new(steps: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        if steps.is_empty() || steps.len() != values.len() {
            return Err(Error::Format(format!(
                "curve needs matching non-empty grids, got {} steps and {} values",
                steps.len(),
                values.len()
            )));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("curve steps must be strictly increasing".into()));
        }
        Ok(Self { steps, values })
    }

    /// Trapezoidal area divided by the span of the grid. A single point is
    /// its own mean.
    pub fn auc(&self) -> f64 {
        if self.steps.len() == 1 {
            return self.values[0];
        }
        // Integrated relative to the first value, so a constant curve is exact.
        let base = self.values[0];
        let area: f64 = self
            .steps
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(s, v)| (s[1] - s[0]) as f64 * ((v[0] - base) + (v[1] - base)) / 2.0)
            .sum();
        base + area / (self.steps[self.steps.len() - 1] - self.steps[0]) as f64
    }

    /// Pointwise mean of curves sharing one grid.
    pub fn mean(curves: &[TrainingCurve]) -> Result<Self> {
        let first = curves.first().ok_or_else(|| Error::Format("no curves to average".into()))?;
        if curves.iter().any(|c| c.steps != first.steps) {
            return Err(Error::Format("curves are sampled on different grids".into()));
        }
        let n = curves.len() as f64;
        let values = (0..first.steps.len())
            .map(|k| curves.iter().map(|c| c.values[k]).sum::<f64>() / n)
            .collect();
        Self::new(first.steps.clone(), values)
    }
}

impl PerformanceLog {
    /// Curve of task `i` over its own window `((i)Δ, (i+1)Δ]`.
    pub fn training_curve(&self, i: usize) -> Result<TrainingCurve> {
        self.check_task(i)?;
        let (lo, hi) = (i as u64 * self.delta, (i as u64 + 1) * self.delta);
        let (steps, values) = self
            .checkpoints
            .iter()
            .zip(&self.values[i])
            .filter(|(s, _)| **s > lo && **s <= hi)
            .map(|(s, v)| (s - lo, *v))
            .unzip();
        TrainingCurve::new(steps, values)
    }

    /// Mean of task `i` over the checkpoints centred on index `c`,
    /// truncated at both ends of the grid.
    pub fn smoothed(&self, i: usize, c: usize) -> f64 {
        let half = SMOOTHING_WINDOW / 2;
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(self.checkpoints.len() - 1);
        let w = &self.values[i][lo..=hi];
        w.iter().sum::<f64>() / w.len() as f64
    }

    fn check_task(&self, i: usize) -> Result<()> {
        if i >= self.tasks {
            return Err(Error::Index { index: i, len: self.tasks });
        }
        Ok(())
    }

    /// Smoothed `(p_i(end of training), p_i(T))`.
    fn endpoints(&self, i: usize) -> Result<(f64, f64)> {
        self.check_task(i)?;
        let end = self.nearest((i as u64 + 1) * self.delta)?;
        Ok((self.smoothed(i, end), self.smoothed(i, self.checkpoints.len() - 1)))
    }
}

/// `(AUC - AUC_ref) / (1 - AUC_ref)`; undefined when the reference AUC is 1.
pub fn forward_transfer(curve: &TrainingCurve, reference: &TrainingCurve) -> Result<f64> {
    if curve.steps != reference.steps {
        return Err(Error::Format("curve and reference use different grids".into()));
    }
    let base = reference.auc();
    if base >= 1.0 {
        return Err(Error::IllDefined("reference AUC is 1".into()));
    }
    Ok((curve.auc() - base) / (1.0 - base))
}

/// Drop of task `i` from the end of its training to the end of the
/// sequence, both endpoints smoothed.
pub fn forgetting(log: &PerformanceLog, i: usize) -> Result<f64> {
    let (end, last) = log.endpoints(i)?;
    Ok(end - last)
}

/// `max(0, p_i(T) - p_i(end of training))` with smoothed endpoints.
pub fn backward_transfer(log: &PerformanceLog, i: usize) -> Result<f64> {
    let (end, last) = log.endpoints(i)?;
    Ok((last - end).max(0.0))
}

/// Task means of a per-task metric.
pub fn mean_over_tasks(log: &PerformanceLog, f: impl Fn(&PerformanceLog, usize) -> Result<f64>) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..log.tasks {
        s += f(log, i)?;
    }
    Ok(s / log.tasks as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(values: Vec<Vec<f64>>, delta: u64) -> PerformanceLog {
        let n = values[0].len() as u64;
        let every = delta * values.len() as u64 / n;
        PerformanceLog::new(values.len(), delta, (1..=n).map(|k| k * every).collect(), values, 0).unwrap()
    }

    #[test]
    fn performance_examples() {
        let l = log(vec![vec![1.0; 4], vec![1.0; 4]], 20);
        assert_eq!(average_performance(&l, 40).unwrap(), 1.0);
        let l = log(vec![vec![0.4, 0.4], vec![0.6, 0.6]], 10);
        assert_eq!(average_performance(&l, 20).unwrap(), 0.5);
        assert!(average_performance(&l, 21).is_err());
    }

    #[test]
    fn auc_of_constant_is_exact() {
        let c = TrainingCurve::new(vec![3, 5, 11, 12], vec![0.37; 4]).unwrap();
        assert_eq!(c.auc(), 0.37);
        let ramp = TrainingCurve::new(vec![0, 1, 2], vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(ramp.auc(), 0.5);
    }

    #[test]
    fn forward_transfer_examples() {
        let steps = vec![1, 2, 3];
        let one = TrainingCurve::new(steps.clone(), vec![1.0; 3]).unwrap();
        let half = TrainingCurve::new(steps.clone(), vec![0.5; 3]).unwrap();
        assert_eq!(forward_transfer(&one, &half).unwrap(), 1.0);
        assert_eq!(forward_transfer(&half, &half).unwrap(), 0.0);
        assert!(matches!(forward_transfer(&half, &one), Err(Error::IllDefined(_))));
        let other = TrainingCurve::new(vec![1, 2, 4], vec![0.5; 3]).unwrap();
        assert!(forward_transfer(&half, &other).is_err());
    }

    #[test]
    fn forgetting_examples() {
        // Two tasks, ten checkpoints each; task 0 ends at index 9.
        let mut a = vec![0.9; 20];
        a[12..].fill(0.2);
        let l = log(vec![a, vec![0.5; 20]], 10);
        assert!((forgetting(&l, 0).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(forgetting(&l, 1).unwrap(), 0.0);
        assert_eq!(backward_transfer(&l, 0).unwrap(), 0.0);
        assert!(forgetting(&l, 2).is_err());
    }

    #[test]
    fn backward_transfer_example() {
        let mut a = vec![0.4; 20];
        a[12..].fill(0.5);
        let l = log(vec![a, vec![0.0; 20]], 10);
        assert!((backward_transfer(&l, 0).unwrap() - 0.1).abs() < 1e-12);
        assert!((forgetting(&l, 0).unwrap() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn smoothing_truncates_at_edges() {
        let l = log(vec![vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]], 6);
        assert!((l.smoothed(0, 5) - 0.4).abs() < 1e-12);
        assert!((l.smoothed(0, 0) - 0.1).abs() < 1e-12);
        assert!((l.smoothed(0, 2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn training_curve_uses_window() {
        let l = log(vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.5, 0.6, 0.7, 0.8]], 20);
        let c = l.training_curve(1).unwrap();
        assert_eq!(c.steps, vec![10, 20]);
        assert_eq!(c.values, vec![0.7, 0.8]);
    }
}
