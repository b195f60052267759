//! Quadratic-penalty regularizers: L2, EWC and MAS.

use ndarray::Array2;

use crate::env::ACTION_DIM;
use crate::nn::mlp::{head, split_gaussian, trunk};
use crate::nn::{Mat, NetworkConfig, ParameterBlock, Tape};
use crate::{Error, Result};

/// Floor applied to each task's EWC importance before accumulation.
pub const EWC_MIN_IMPORTANCE: f64 = 1e-5;

/// Running sum of per-task importance vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceWeights {
    pub values: Vec<f64>,
    /// Number of tasks summed into `values`.
    pub tasks: usize,
}

impl ImportanceWeights {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            tasks: 0,
        }
    }

    pub fn accumulate(&mut self, task: &[f64]) -> Result<()> {
        check_len("importance", self.values.len(), task.len())?;
        self.values.iter_mut().zip(task).for_each(|(s, f)| *s += f);
        self.tasks += 1;
        Ok(())
    }
}

/// Parameters at the end of the previous task.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorParameters {
    pub values: Vec<f64>,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

/// `lambda * sum_k F_k (theta_k - anchor_k)^2`
pub fn quadratic_penalty(
    params: &[f64],
    anchor: &AnchorParameters,
    importance: &ImportanceWeights,
    lambda: f64,
) -> Result<f64> {
    check_len("anchor", params.len(), anchor.values.len())?;
    check_len("importance", params.len(), importance.values.len())?;
    let s: f64 = params
        .iter()
        .zip(&anchor.values)
        .zip(&importance.values)
        .map(|((p, a), f)| f * (p - a) * (p - a))
        .sum();
    Ok(lambda * s)
}

/// Gradient of [`quadratic_penalty`] with respect to `params`.
pub fn quadratic_penalty_grad(
    params: &[f64],
    anchor: &AnchorParameters,
    importance: &ImportanceWeights,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_len("anchor", params.len(), anchor.values.len())?;
    check_len("importance", params.len(), importance.values.len())?;
    Ok(params
        .iter()
        .zip(&anchor.values)
        .zip(&importance.values)
        .map(|((p, a), f)| 2.0 * lambda * f * (p - a))
        .collect())
}

/// Diagonal Fisher entry of a factorized Gaussian for one parameter:
/// `sum_l (dmu_l / sigma_l)^2 + 2 (dsigma_l / sigma_l)^2`.
pub fn fisher_diag_gaussian(dmu: &[f64], dsigma: &[f64], sigma: &[f64]) -> Result<f64> {
    check_len("dmu", sigma.len(), dmu.len())?;
    check_len("dsigma", sigma.len(), dsigma.len())?;
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Config(format!("standard deviation must be positive, got {s}")));
    }
    Ok(dmu
        .iter()
        .zip(dsigma)
        .zip(sigma)
        .map(|((m, d), s)| (m / s).powi(2) + 2.0 * (d / s).powi(2))
        .sum())
}

fn row(x: &[f64]) -> Mat {
    Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row")
}

fn seed(cols: usize, hot: usize) -> Mat {
    let mut s = Mat::zeros((1, cols));
    s[[0, hot]] = 1.0;
    s
}

/// Mean Gaussian-policy Fisher diagonal of `head_idx` over `observations`.
///
/// Per observation the mean and log-std outputs are differentiated one
/// component at a time; `dsigma / sigma` is the log-std derivative.
pub fn policy_fisher(
    params: &ParameterBlock,
    net: &NetworkConfig,
    observations: &[&[f64]],
    head_idx: usize,
) -> Result<Vec<f64>> {
    if observations.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let n = params.total_count();
    let mut acc = vec![0.0; n];
    for obs in observations {
        let mut tape = Tape::new();
        let vars = params.load(&mut tape, true);
        let x = tape.constant(row(obs));
        let h = trunk(&mut tape, net, &vars, x);
        let out = head(&mut tape, net, &vars, h, head_idx);
        let (mean, log_std) = split_gaussian(&mut tape, out, ACTION_DIM);
        let sigma: Vec<f64> = tape.value(log_std).iter().map(|v| v.exp()).collect();
        for l in 0..ACTION_DIM {
            let dmu = params.collect_gradient(&tape.backward_seeded(mean, seed(ACTION_DIM, l)), &vars);
            let dls = params.collect_gradient(&tape.backward_seeded(log_std, seed(ACTION_DIM, l)), &vars);
            let s2 = sigma[l] * sigma[l];
            for ((a, m), d) in acc.iter_mut().zip(&dmu.values).zip(&dls.values) {
                *a += m * m / s2 + 2.0 * d * d;
            }
        }
    }
    let inv = 1.0 / observations.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// Fisher diagonal of a scalar critic under a unit-variance Gaussian
/// likelihood: the mean of `(dQ / dtheta)^2`.
pub fn critic_fisher(
    params: &ParameterBlock,
    net: &NetworkConfig,
    inputs: &[&[f64]],
    head_idx: usize,
) -> Result<Vec<f64>> {
    per_sample_mean(params, net, inputs, head_idx, |tape, out| {
        (out, tape.value(out).mapv(|_| 1.0))
    }, |g| g * g)
}

/// Mean absolute gradient of `||g(x)||^2` where `g` is the raw output of
/// head `head_idx`.
pub fn output_sensitivity(
    params: &ParameterBlock,
    net: &NetworkConfig,
    inputs: &[&[f64]],
    head_idx: usize,
) -> Result<Vec<f64>> {
    per_sample_mean(params, net, inputs, head_idx, |tape, out| {
        let sq = tape.square(out);
        let s = tape.sum(sq);
        (s, Mat::from_elem((1, 1), 1.0))
    }, f64::abs)
}

fn per_sample_mean(
    params: &ParameterBlock,
    net: &NetworkConfig,
    inputs: &[&[f64]],
    head_idx: usize,
    target: impl Fn(&mut Tape, crate::nn::Var) -> (crate::nn::Var, Mat),
    per_entry: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut acc = vec![0.0; params.total_count()];
    for x in inputs {
        let mut tape = Tape::new();
        let vars = params.load(&mut tape, true);
        let xv = tape.constant(row(x));
        let h = trunk(&mut tape, net, &vars, xv);
        let out = head(&mut tape, net, &vars, h, head_idx);
        let (t, s) = target(&mut tape, out);
        let g = params.collect_gradient(&tape.backward_seeded(t, s), &vars);
        acc.iter_mut()
            .zip(&g.values)
            .for_each(|(a, g)| *a += per_entry(*g));
    }
    let inv = 1.0 / inputs.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// Elementwise floor at [`EWC_MIN_IMPORTANCE`].
pub fn clip_importance(values: &mut [f64]) {
    values
        .iter_mut()
        .for_each(|v| *v = v.max(EWC_MIN_IMPORTANCE));
}
