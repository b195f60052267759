//! Straight-line reference implementations used as test oracles.

#![allow(dead_code)]

use std::ops::{Add, Mul, Sub};

use cworld_core::nn::NetworkConfig;

/// Scalar arithmetic the reference forward pass is generic over.
pub trait Num: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn lift(x: f64) -> Self;
    fn re(self) -> f64;
    fn tanh(self) -> Self;
    fn inv_sqrt(self) -> Self;
}

impl Num for f64 {
    fn lift(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn inv_sqrt(self) -> Self {
        1.0 / self.sqrt()
    }
}

/// Forward-mode dual number `v + d * eps`.
#[derive(Clone, Copy, Debug)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Num for Dual {
    fn lift(x: f64) -> Self {
        Dual { v: x, d: 0.0 }
    }
    fn re(self) -> f64 {
        self.v
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        Dual { v: t, d: self.d * (1.0 - t * t) }
    }
    fn inv_sqrt(self) -> Self {
        let r = 1.0 / self.v.sqrt();
        Dual { v: r, d: -0.5 * r * r * r * self.d }
    }
}

const EPS: f64 = 1e-5;

/// Raw output of head `k` for one input row. Weight matrices are stored
/// row-major as `[fan_in, fan_out]`.
pub fn forward<T: Num>(net: &NetworkConfig, theta: &[T], x: &[f64], k: usize) -> Vec<T> {
    let mut offsets = Vec::new();
    let mut at = 0;
    for (_, shape) in net.layout() {
        offsets.push(at);
        at += shape.iter().product::<usize>();
    }
    assert_eq!(at, theta.len());
    let dense = |input: &[T], w: usize, b: usize, fan_out: usize| -> Vec<T> {
        (0..fan_out)
            .map(|j| {
                let mut s = theta[offsets[b] + j];
                for (i, &xi) in input.iter().enumerate() {
                    s = s + xi * theta[offsets[w] + i * fan_out + j];
                }
                s
            })
            .collect()
    };
    let width = net.hidden_width;
    let input: Vec<T> = x.iter().map(|&v| T::lift(v)).collect();
    let z: Vec<T> = dense(&input, 0, 1, width).into_iter().map(T::tanh).collect();
    let inv_n = T::lift(1.0 / width as f64);
    let mean = z.iter().fold(T::lift(0.0), |a, &b| a + b) * inv_n;
    let var = z.iter().fold(T::lift(0.0), |a, &b| a + (b - mean) * (b - mean)) * inv_n;
    let r = (var + T::lift(EPS)).inv_sqrt();
    let mut h: Vec<T> = (0..width)
        .map(|j| (z[j] - mean) * r * theta[offsets[2] + j] + theta[offsets[3] + j])
        .collect();
    for l in 1..net.hidden_layers {
        let w = 4 + 2 * (l - 1);
        h = dense(&h, w, w + 1, width)
            .into_iter()
            .map(|v| if v.re() > 0.0 { v } else { v * T::lift(net.leaky_slope) })
            .collect();
    }
    let (w, b) = net.head_entries(k);
    dense(&h, w, b, net.head_dim)
}

/// `(mean, log_std)` of an actor head with the log-std clamp applied.
pub fn gaussian<T: Num>(net: &NetworkConfig, theta: &[T], x: &[f64], k: usize) -> (Vec<T>, Vec<T>) {
    let out = forward(net, theta, x, k);
    let a = net.head_dim / 2;
    let log_std = out[a..]
        .iter()
        .map(|&v| {
            if v.re() < -20.0 {
                T::lift(-20.0)
            } else if v.re() > 2.0 {
                T::lift(2.0)
            } else {
                v
            }
        })
        .collect();
    (out[..a].to_vec(), log_std)
}

/// `theta` with coordinate `i` seeded as the differentiation direction.
pub fn seeded(theta: &[f64], i: usize) -> Vec<Dual> {
    theta
        .iter()
        .enumerate()
        .map(|(j, &v)| Dual { v, d: if i == j { 1.0 } else { 0.0 } })
        .collect()
}
