use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::ParameterBlock;
use super::tape::{Mat, Tape, Var};
use crate::{Error, Result, Rng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Shape of a multi-head MLP.
///
/// `linear -> tanh -> layernorm -> (linear -> leaky relu) x (L-1) -> head_k`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    #[serde(default = "default_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_width")]
    pub hidden_width: usize,
    pub heads: usize,
    pub head_dim: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
}

fn default_layers() -> usize {
    4
}
fn default_width() -> usize {
    256
}
fn default_slope() -> f64 {
    0.2
}

impl NetworkConfig {
    pub fn new(input_dim: usize, heads: usize, head_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: default_layers(),
            hidden_width: default_width(),
            heads,
            head_dim,
            leaky_slope: default_slope(),
        }
    }

    pub fn with_hidden(mut self, layers: usize, width: usize) -> Self {
        self.hidden_layers = layers;
        self.hidden_width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers < 1 || self.heads < 1 || self.hidden_width < 1 {
            return Err(Error::Config(format!(
                "network needs at least one hidden layer, one unit and one head: {self:?}"
            )));
        }
        if self.input_dim == 0 || self.head_dim == 0 {
            return Err(Error::Config("network input and head dims must be positive".into()));
        }
        Ok(())
    }

    /// Entry names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let w = self.hidden_width;
        let mut out = vec![
            ("l0.w".to_string(), vec![self.input_dim, w]),
            ("l0.b".to_string(), vec![w]),
            ("ln.gain".to_string(), vec![w]),
            ("ln.bias".to_string(), vec![w]),
        ];
        for l in 1..self.hidden_layers {
            out.push((format!("l{l}.w"), vec![w, w]));
            out.push((format!("l{l}.b"), vec![w]));
        }
        for k in 0..self.heads {
            out.push((format!("head{k}.w"), vec![w, self.head_dim]));
            out.push((format!("head{k}.b"), vec![self.head_dim]));
        }
        out
    }

    /// Index of the first head entry; everything before it is the shared trunk.
    pub fn trunk_entries(&self) -> usize {
        4 + 2 * (self.hidden_layers - 1)
    }

    /// Entry indices `(weight, bias)` of head `k`.
    pub fn head_entries(&self, k: usize) -> (usize, usize) {
        let base = self.trunk_entries() + 2 * k;
        (base, base + 1)
    }

    /// Uniform fan-in initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
    /// layer-norm gain 1, bias 0.
    pub fn init(&self, rng: &mut Rng) -> ParameterBlock {
        let items = self
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let values = if name == "ln.gain" {
                    vec![1.0; n]
                } else if name == "ln.bias" {
                    vec![0.0; n]
                } else {
                    let fan_in = if shape.len() == 2 {
                        shape[0]
                    } else if name.starts_with("l0") {
                        self.input_dim
                    } else {
                        self.hidden_width
                    };
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                };
                (name, shape, values)
            })
            .collect();
        ParameterBlock::new(items).expect("layout is consistent")
    }

    /// All-zero parameters (layer-norm gain still 1).
    pub fn zeros(&self) -> ParameterBlock {
        let items = self
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                let fill = if name == "ln.gain" { 1.0 } else { 0.0 };
                (name, shape, vec![fill; n])
            })
            .collect();
        ParameterBlock::new(items).expect("layout is consistent")
    }

    /// Whether `block` has exactly this layout.
    pub fn matches(&self, block: &ParameterBlock) -> bool {
        let layout = self.layout();
        layout.len() == block.entries().len()
            && layout
                .iter()
                .zip(block.entries())
                .all(|((n, s), e)| *n == e.name && *s == e.shape)
    }
}

/// Shared trunk on a batch `x` (`n x input_dim`).
pub fn trunk(tape: &mut Tape, cfg: &NetworkConfig, vars: &[Var], x: Var) -> Var {
    let z = tape.matmul(x, vars[0]);
    let z = tape.add_row(z, vars[1]);
    let z = tape.tanh(z);
    let z = tape.layer_norm(z, LAYER_NORM_EPS);
    let z = tape.mul_row(z, vars[2]);
    let mut h = tape.add_row(z, vars[3]);
    for l in 1..cfg.hidden_layers {
        let w = vars[4 + 2 * (l - 1)];
        let b = vars[5 + 2 * (l - 1)];
        let z = tape.matmul(h, w);
        let z = tape.add_row(z, b);
        h = tape.leaky_relu(z, cfg.leaky_slope);
    }
    h
}

/// Linear output layer of head `k` applied to trunk features `h`.
pub fn head(tape: &mut Tape, cfg: &NetworkConfig, vars: &[Var], h: Var, k: usize) -> Var {
    let (w, b) = cfg.head_entries(k);
    let z = tape.matmul(h, vars[w]);
    tape.add_row(z, vars[b])
}

/// Splits an actor head output into `(mean, clamped log_std)`.
pub fn split_gaussian(tape: &mut Tape, out: Var, action_dim: usize) -> (Var, Var) {
    let mean = tape.columns(out, 0, action_dim);
    let raw = tape.columns(out, action_dim, 2 * action_dim);
    let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
    (mean, log_std)
}

/// Mean and log standard deviation of a factorized Gaussian policy.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

fn check_head(cfg: &NetworkConfig, head: usize) -> Result<()> {
    if head >= cfg.heads {
        return Err(Error::HeadOutOfRange {
            head,
            heads: cfg.heads,
        });
    }
    Ok(())
}

fn check_params(cfg: &NetworkConfig, params: &ParameterBlock) -> Result<()> {
    if !cfg.matches(params) {
        return Err(Error::Config("parameter block does not match network layout".into()));
    }
    Ok(())
}

fn row(values: &[f64]) -> Mat {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row")
}

/// Policy output for one observation.
pub fn forward_actor(
    params: &ParameterBlock,
    cfg: &NetworkConfig,
    obs: &[f64],
    head_idx: usize,
) -> Result<GaussianHead> {
    check_params(cfg, params)?;
    if obs.len() != cfg.input_dim {
        return Err(Error::Dimension {
            what: "actor observation",
            expected: cfg.input_dim,
            got: obs.len(),
        });
    }
    check_head(cfg, head_idx)?;
    if !cfg.head_dim.is_multiple_of(2) {
        return Err(Error::Config("actor head_dim must be even (mean, log_std)".into()));
    }
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, false);
    let x = tape.constant(row(obs));
    let h = trunk(&mut tape, cfg, &vars, x);
    let out = head(&mut tape, cfg, &vars, h, head_idx);
    let (mean, log_std) = split_gaussian(&mut tape, out, cfg.head_dim / 2);
    Ok(GaussianHead {
        mean: tape.value(mean).iter().copied().collect(),
        log_std: tape.value(log_std).iter().copied().collect(),
    })
}

/// Policy outputs `(mean, log_std)` for a batch of observations (`n x input_dim`).
pub fn forward_actor_batch(
    params: &ParameterBlock,
    cfg: &NetworkConfig,
    obs: Mat,
    head_idx: usize,
) -> Result<(Mat, Mat)> {
    check_params(cfg, params)?;
    check_head(cfg, head_idx)?;
    if obs.ncols() != cfg.input_dim {
        return Err(Error::Dimension {
            what: "actor observation",
            expected: cfg.input_dim,
            got: obs.ncols(),
        });
    }
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, false);
    let x = tape.constant(obs);
    let h = trunk(&mut tape, cfg, &vars, x);
    let out = head(&mut tape, cfg, &vars, h, head_idx);
    let (mean, log_std) = split_gaussian(&mut tape, out, cfg.head_dim / 2);
    Ok((tape.value(mean).clone(), tape.value(log_std).clone()))
}

/// Q-value of one `(obs, action)` pair.
pub fn forward_critic(
    params: &ParameterBlock,
    cfg: &NetworkConfig,
    obs: &[f64],
    action: &[f64],
    head_idx: usize,
) -> Result<f64> {
    check_params(cfg, params)?;
    if obs.len() + action.len() != cfg.input_dim {
        return Err(Error::Dimension {
            what: "critic observation + action",
            expected: cfg.input_dim,
            got: obs.len() + action.len(),
        });
    }
    check_head(cfg, head_idx)?;
    let mut input = obs.to_vec();
    input.extend_from_slice(action);
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, false);
    let x = tape.constant(row(&input));
    let h = trunk(&mut tape, cfg, &vars, x);
    let out = head(&mut tape, cfg, &vars, h, head_idx);
    Ok(tape.value(out)[[0, 0]])
}
