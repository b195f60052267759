use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Running statistics of value targets for one task head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopArtStats {
    pub mean: f64,
    pub second_moment: f64,
    pub count: u64,
    pub std_floor: f64,
    /// Lower bound on the moving-average step; early updates use `1 / count`.
    pub beta: f64,
}

impl Default for PopArtStats {
    fn default() -> Self {
        Self {
            mean: 0.0,
            second_moment: 1.0,
            count: 0,
            std_floor: 1e-4,
            beta: 3e-4,
        }
    }
}

impl PopArtStats {
    /// Always at least `std_floor`.
    pub fn std(&self) -> f64 {
        (self.second_moment - self.mean * self.mean)
            .max(0.0)
            .sqrt()
            .max(self.std_floor)
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.mean) / self.std()
    }

    pub fn denormalize(&self, q: f64) -> f64 {
        self.std() * q + self.mean
    }

    /// Statistics after observing one batch of targets.
    pub fn updated(&self, targets: &[f64]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("value targets".into()));
        }
        let n = targets.len() as f64;
        let batch_mean = targets.iter().sum::<f64>() / n;
        let batch_second = targets.iter().map(|y| y * y).sum::<f64>() / n;
        let count = self.count + 1;
        let step = self.beta.max(1.0 / count as f64);
        Ok(Self {
            mean: self.mean + step * (batch_mean - self.mean),
            second_moment: self.second_moment + step * (batch_second - self.second_moment),
            count,
            ..self.clone()
        })
    }
}

/// Rescales a linear output layer so `old.denormalize(w·h + b)` equals
/// `new.denormalize(w'·h + b')` for every feature vector `h`.
pub fn rescale_head(old: &PopArtStats, new: &PopArtStats, weights: &mut [f64], bias: &mut [f64]) {
    let (s0, s1) = (old.std(), new.std());
    if s0 == s1 && old.mean == new.mean {
        return;
    }
    let ratio = s0 / s1;
    weights.iter_mut().for_each(|w| *w *= ratio);
    bias.iter_mut()
        .for_each(|b| *b = (s0 * *b + old.mean - new.mean) / s1);
}

/// Output of [`popart_update`].
#[derive(Clone, Debug, PartialEq)]
pub struct PopArtUpdate {
    pub stats: PopArtStats,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Updates the statistics with `targets`, rescales the head so its
/// de-normalized outputs are preserved, and normalizes the targets with the
/// new statistics.
pub fn popart_update(
    stats: &PopArtStats,
    targets: &[f64],
    weights: &[f64],
    bias: &[f64],
) -> Result<PopArtUpdate> {
    let new = stats.updated(targets)?;
    let mut w = weights.to_vec();
    let mut b = bias.to_vec();
    rescale_head(stats, &new, &mut w, &mut b);
    let normalized = targets.iter().map(|&y| new.normalize(y)).collect();
    Ok(PopArtUpdate {
        stats: new,
        weights: w,
        bias: b,
        normalized,
    })
}
