use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, Rng};

/// Factorized Gaussian over the actor parameters and the prior it is
/// regularized toward.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPosterior {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_log_std: Vec<f64>,
}

impl WeightPosterior {
    pub fn new(mean: Vec<f64>, std: f64) -> Self {
        let n = mean.len();
        let ls = std.ln();
        Self {
            prior_mean: mean.clone(),
            mean,
            log_std: vec![ls; n],
            prior_log_std: vec![ls; n],
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.mean.len();
        for (what, len) in [
            ("posterior log_std", self.log_std.len()),
            ("prior mean", self.prior_mean.len()),
            ("prior log_std", self.prior_log_std.len()),
        ] {
            if len != n {
                return Err(Error::Dimension { what, expected: n, got: len });
            }
        }
        if self
            .log_std
            .iter()
            .chain(&self.prior_log_std)
            .any(|l| !l.is_finite())
        {
            return Err(Error::NonFinite("posterior standard deviation".into()));
        }
        Ok(())
    }

    /// The posterior becomes the prior for the next task.
    pub fn promote(&mut self) {
        self.prior_mean.clone_from(&self.mean);
        self.prior_log_std.clone_from(&self.log_std);
    }
}

/// `KL(posterior || prior)` summed over parameters.
pub fn vcl_kl(post: &WeightPosterior) -> Result<f64> {
    post.check()?;
    let mut kl = 0.0;
    for i in 0..post.mean.len() {
        let (ls, lp) = (post.log_std[i], post.prior_log_std[i]);
        let var_ratio = (2.0 * (ls - lp)).exp();
        let d = post.mean[i] - post.prior_mean[i];
        let prior_var = (2.0 * lp).exp();
        kl += lp - ls + 0.5 * (var_ratio + d * d / prior_var) - 0.5;
    }
    Ok(kl)
}

/// Gradient of [`vcl_kl`] with respect to `(mean, log_std)`.
pub fn vcl_kl_grad(post: &WeightPosterior) -> Result<(Vec<f64>, Vec<f64>)> {
    post.check()?;
    let n = post.mean.len();
    let mut dm = Vec::with_capacity(n);
    let mut dl = Vec::with_capacity(n);
    for i in 0..n {
        let lp = post.prior_log_std[i];
        let prior_var = (2.0 * lp).exp();
        dm.push((post.mean[i] - post.prior_mean[i]) / prior_var);
        dl.push((2.0 * (post.log_std[i] - lp)).exp() - 1.0);
    }
    Ok((dm, dl))
}

/// One reparameterized draw `theta = mean + std * z`; returns `(theta, z)`.
pub fn vcl_sample(post: &WeightPosterior, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = (0..post.mean.len()).map(|_| StandardNormal.sample(rng)).collect();
    let theta = post
        .mean
        .iter()
        .zip(&post.log_std)
        .zip(&z)
        .map(|((m, l), z)| m + l.exp() * z)
        .collect();
    (theta, z)
}
