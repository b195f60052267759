use rand::Rng as _;

use crate::{Error, Result, Rng};

pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Percentile bootstrap interval for the mean of `samples`.
///
/// Quantiles use linear interpolation between order statistics.
pub fn bootstrap_ci(samples: &[f64], level: f64, resamples: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 samples, got {}", samples.len())));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::Config(format!("invalid bootstrap level {level} or resample count {resamples}")));
    }
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// Interval across seeds; a single seed collapses to its value.
pub fn seed_interval(samples: &[f64], level: f64, resamples: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    match samples {
        [x] => Ok((*x, *x)),
        _ => bootstrap_ci(samples, level, resamples, rng),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let v = sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]);
    v.clamp(sorted[lo], sorted[hi])
}
