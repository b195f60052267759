use std::collections::HashMap;

use ndarray::Array2;

use super::tape::{Gradients, Mat, Tape, Var};
use crate::{Error, Result};

/// Metadata for one named tensor inside a [`ParameterBlock`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl ParamEntry {
    /// Shape as a matrix; vectors become a single row.
    pub fn matrix_dim(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            more => (more[..more.len() - 1].iter().product(), more[more.len() - 1]),
        }
    }
}

/// Flat parameter storage with named entries.
///
/// All entries live in one contiguous buffer, so optimizers, masks and
/// importance vectors align with [`ParameterBlock::values`] index by index.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterBlock {
    entries: Vec<ParamEntry>,
    values: Vec<f64>,
    by_name: HashMap<String, usize>,
}

impl ParameterBlock {
    /// Builds a block from `(name, shape, values)` triples.
    pub fn new(items: Vec<(String, Vec<usize>, Vec<f64>)>) -> Result<Self> {
        let mut entries = Vec::with_capacity(items.len());
        let mut values = Vec::new();
        let mut by_name = HashMap::new();
        for (name, shape, vals) in items {
            let len: usize = shape.iter().product();
            if len != vals.len() {
                return Err(Error::Dimension {
                    what: "parameter entry length",
                    expected: len,
                    got: vals.len(),
                });
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter `{name}`")));
            }
            if by_name.insert(name.clone(), entries.len()).is_some() {
                return Err(Error::Format(format!("duplicate parameter name `{name}`")));
            }
            entries.push(ParamEntry {
                name,
                shape,
                offset: values.len(),
                len,
            });
            values.extend(vals);
        }
        Ok(Self {
            entries,
            values,
            by_name,
        })
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn total_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.index_of(name).map(|i| &self.entries[i])
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let e = &self.entries[i];
        &self.values[e.offset..e.offset + e.len]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let e = &self.entries[i];
        &mut self.values[e.offset..e.offset + e.len]
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.slice(i))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.index_of(name).map(|i| self.slice_mut(i))
    }

    /// Entry `i` copied into a matrix.
    pub fn matrix(&self, i: usize) -> Mat {
        let dim = self.entries[i].matrix_dim();
        Array2::from_shape_vec(dim, self.slice(i).to_vec()).expect("entry shape")
    }

    /// Replaces every value; the new buffer must be finite and the same length.
    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.values.len() {
            return Err(Error::Dimension {
                what: "flat parameter vector",
                expected: self.values.len(),
                got: flat.len(),
            });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter assignment".into()));
        }
        self.values.copy_from_slice(flat);
        Ok(())
    }

    /// Same layout, different values.
    pub fn with_values(&self, flat: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.assign(&flat)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Pushes every entry onto `tape`, as leaves when `trainable`.
    pub fn load(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        (0..self.entries.len())
            .map(|i| {
                let m = self.matrix(i);
                if trainable {
                    tape.leaf(m)
                } else {
                    tape.constant(m)
                }
            })
            .collect()
    }

    /// Flattens the adjoints of `vars` (as produced by [`load`](Self::load))
    /// into a vector aligned with this block. Missing adjoints are zero.
    pub fn collect_gradient(&self, grads: &Gradients, vars: &[Var]) -> GradientVector {
        let mut out = vec![0.0; self.values.len()];
        for (e, v) in self.entries.iter().zip(vars) {
            if let Some(g) = grads.get(*v) {
                out[e.offset..e.offset + e.len]
                    .iter_mut()
                    .zip(g.iter())
                    .for_each(|(o, x)| *o = *x);
            }
        }
        GradientVector::new(out)
    }
}

/// Gradient aligned with a [`ParameterBlock`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &GradientVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Concatenation `[self | other]`.
    pub fn concat(&self, other: &GradientVector) -> GradientVector {
        let mut v = self.values.clone();
        v.extend_from_slice(&other.values);
        GradientVector::new(v)
    }

    /// Splits at `mid` into `(head, tail)`.
    pub fn split(mut self, mid: usize) -> (GradientVector, GradientVector) {
        let tail = self.values.split_off(mid);
        (self, GradientVector::new(tail))
    }
}

/// Rescales `g` so its L2 norm is at most `max_norm`.
pub fn clip_global_norm(g: &GradientVector, max_norm: f64) -> GradientVector {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = g.norm();
    if norm <= max_norm {
        return g.clone();
    }
    let scale = max_norm / norm;
    GradientVector::new(g.values.iter().map(|x| x * scale).collect())
}

/// Reverse-mode gradient of a scalar loss built from the entries of `params`.
///
/// `loss_fn` receives the tape and one [`Var`] per entry, in block order.
pub fn value_and_gradient<F>(params: &ParameterBlock, loss_fn: F) -> Result<(f64, GradientVector)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, true);
    let loss = loss_fn(&mut tape, &vars);
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let grads = tape.backward(loss);
    Ok((value, params.collect_gradient(&grads, &vars)))
}

pub fn gradient<F>(params: &ParameterBlock, loss_fn: F) -> Result<GradientVector>
where
    F: FnOnce(&mut Tape, &[Var]) -> Var,
{
    value_and_gradient(params, loss_fn).map(|(_, g)| g)
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Clears moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    /// Like [`step`](Self::step) but leaves entries with `active[i] == false`
    /// and their moment estimates untouched.
    pub fn step_masked(&mut self, params: &mut [f64], grad: &[f64], active: &[bool]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        assert_eq!(active.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in (0..params.len()).filter(|&i| active[i]) {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block() -> ParameterBlock {
        ParameterBlock::new(vec![
            ("w".into(), vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]),
            ("b".into(), vec![2], vec![0.25, -0.75]),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_duplicate_names_and_bad_lengths() {
        assert!(ParameterBlock::new(vec![
            ("a".into(), vec![1], vec![0.0]),
            ("a".into(), vec![1], vec![0.0]),
        ])
        .is_err());
        assert!(ParameterBlock::new(vec![("a".into(), vec![2], vec![0.0])]).is_err());
        assert!(ParameterBlock::new(vec![("a".into(), vec![1], vec![f64::NAN])]).is_err());
        assert_eq!(block().total_count(), 6);
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_theta() {
        let p = block();
        let g = gradient(&p, |t, vars| {
            let mut acc = None;
            for &v in vars {
                let sq = t.square(v);
                let s = t.sum(sq);
                acc = Some(match acc {
                    None => s,
                    Some(a) => t.add(a, s),
                });
            }
            acc.unwrap()
        })
        .unwrap();
        let expect: Vec<f64> = p.values().iter().map(|x| 2.0 * x).collect();
        assert_eq!(g.values, expect);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = block();
        let g = gradient(&p, |t, _| t.constant(Mat::from_elem((1, 1), 4.0))).unwrap();
        assert!(g.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let p = block();
        let r = gradient(&p, |t, _| t.constant(Mat::from_elem((1, 1), f64::INFINITY)));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn clip_examples() {
        let g = GradientVector::new(vec![3.0, 4.0]);
        assert_eq!(clip_global_norm(&g, 5.0).values, vec![3.0, 4.0]);
        let c = clip_global_norm(&g, 1.0).values;
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip_global_norm(&GradientVector::zeros(2), 1.0).values, vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn clip_bounds_norm_and_keeps_direction(
            v in prop::collection::vec(-1e3f64..1e3, 1..40),
            max_norm in 1e-6f64..1e3,
        ) {
            let g = GradientVector::new(v);
            let c = clip_global_norm(&g, max_norm);
            prop_assert!(c.norm() <= max_norm + 1e-12);
            let n = g.norm();
            if n > 0.0 {
                let cos = g.dot(&c) / (n * c.norm().max(1e-300));
                prop_assert!(c.norm() == 0.0 || (cos - 1.0).abs() < 1e-9);
            }
        }
    }
}
