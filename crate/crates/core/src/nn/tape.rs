//! A small reverse-mode tape over dense row-major matrices.
//!
//! Every value on the tape is a 2-D matrix; scalars are `1 x 1`. Rows index
//! batch samples and columns index features. The op set is exactly what the
//! networks and losses in this crate need, nothing more.

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    LayerNorm(Var, Vec<f64>),
    Columns(Var, usize),
    Concat(Var, Var),
    Rows(Var, Vec<usize>),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Mat,
    op: Op,
    tracked: bool,
}

/// Records a computation so gradients can be pulled back through it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Input whose adjoint is reported by `backward`.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    fn unary(&mut self, a: Var, value: Mat, op: Op) -> Var {
        let t = self.tracked(a);
        self.push(value, op, t)
    }

    fn binary(&mut self, a: Var, b: Var, value: Mat, op: Op) -> Var {
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, op, t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.binary(a, b, v, Op::MatMul(a, b))
    }

    /// `a + row`, broadcasting a `1 x m` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).row(0).to_owned();
        let mut v = self.value(a).clone();
        v.axis_iter_mut(Axis(0)).for_each(|mut x| x += &r);
        self.binary(a, row, v, Op::AddRow(a, row))
    }

    /// `a * row` elementwise, broadcasting a `1 x m` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).row(0).to_owned();
        let mut v = self.value(a).clone();
        v.axis_iter_mut(Axis(0)).for_each(|mut x| x *= &r);
        self.binary(a, row, v, Op::MulRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(a, b, v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.binary(a, b, v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.binary(a, b, v, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        Zip::from(&mut v)
            .and(self.value(b))
            .for_each(|x, &y| *x = x.min(y));
        self.binary(a, b, v, Op::Min(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.unary(a, v, Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.unary(a, v, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    /// Leaky ReLU; the kink at 0 takes the negative-slope branch.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self
            .value(a)
            .mapv(|x| if x > 0.0 { x } else { slope * x });
        self.unary(a, v, Op::LeakyRelu(a, slope))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.unary(a, v, Op::Exp(a))
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.unary(a, v, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.unary(a, v, Op::Square(a))
    }

    /// Clamp into `[lo, hi]`; gradient passes only inside the closed range.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a, lo, hi))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)` without affine terms.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let n = x.ncols() as f64;
        let mut v = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in v.axis_iter_mut(Axis(0)) {
            let mean = row.sum() / n;
            row -= mean;
            let var = row.iter().map(|d| d * d).sum::<f64>() / n;
            let r = 1.0 / (var + eps).sqrt();
            row *= r;
            inv_std.push(r);
        }
        self.unary(a, v, Op::LayerNorm(a, inv_std))
    }

    /// Columns `start..end`.
    pub fn columns(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.unary(a, v, Op::Columns(a, start))
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat: row counts differ");
        self.binary(a, b, v, Op::Concat(a, b))
    }

    /// Gathers the listed rows (repeats allowed).
    pub fn rows(&mut self, a: Var, index: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), index);
        self.unary(a, v, Op::Rows(a, index.to_vec()))
    }

    /// Sum across columns, giving an `n x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.unary(a, v, Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.unary(a, v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Mat::from_elem((1, 1), m.sum() / m.len() as f64);
        self.unary(a, v, Op::Mean(a))
    }

    /// Adjoints of a scalar output.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).dim(), (1, 1), "backward needs a scalar output");
        self.backward_seeded(out, Mat::from_elem((1, 1), 1.0))
    }

    /// Adjoints of `<seed, out>` for an arbitrary-shaped output.
    pub fn backward_seeded(&self, out: Var, seed: Mat) -> Gradients {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(seed.dim(), self.value(out).dim(), "seed shape mismatch");
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.tracked(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        match &node.op {
            Op::Constant | Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.tracked(*a) {
                    let ga = g.dot(&self.value(*b).t());
                    self.accumulate(grads, *a, ga);
                }
                if self.tracked(*b) {
                    let gb = self.value(*a).t().dot(g);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.tracked(*row) {
                    self.accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulRow(a, row) => {
                if self.tracked(*a) {
                    let r = self.value(*row).row(0).to_owned();
                    let mut ga = g.clone();
                    ga.axis_iter_mut(Axis(0)).for_each(|mut x| x *= &r);
                    self.accumulate(grads, *a, ga);
                }
                if self.tracked(*row) {
                    let gr = (g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(grads, *row, gr);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.tracked(*b) {
                    self.accumulate(grads, *b, -g);
                }
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    self.accumulate(grads, *a, g * self.value(*b));
                }
                if self.tracked(*b) {
                    self.accumulate(grads, *b, g * self.value(*a));
                }
            }
            Op::Min(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(va)
                        .and(vb)
                        .for_each(|d, &x, &y| if x > y { *d = 0.0 });
                    self.accumulate(grads, *a, ga);
                }
                if self.tracked(*b) {
                    let mut gb = g.clone();
                    Zip::from(&mut gb)
                        .and(va)
                        .and(vb)
                        .for_each(|d, &x, &y| if x <= y { *d = 0.0 });
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g * *c),
            Op::Offset(a) => self.accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= 1.0 - y * y);
                self.accumulate(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= 0.0 { *d *= slope });
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g * &node.value),
            Op::Softplus(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(self.value(*a))
                    .for_each(|d, &x| *d *= sigmoid(x));
                self.accumulate(grads, *a, ga);
            }
            Op::Square(a) => self.accumulate(grads, *a, g * self.value(*a) * 2.0),
            Op::Clamp(a, lo, hi) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x < *lo || x > *hi { *d = 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm(a, inv_std) => {
                let xhat = &node.value;
                let n = xhat.ncols() as f64;
                let mut ga = g.clone();
                for ((mut d, xh), r) in ga
                    .axis_iter_mut(Axis(0))
                    .zip(xhat.axis_iter(Axis(0)))
                    .zip(inv_std)
                {
                    let sum_g = d.sum();
                    let sum_gx = d.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>();
                    Zip::from(&mut d)
                        .and(&xh)
                        .for_each(|gi, &x| *gi = r / n * (n * *gi - sum_g - x * sum_gx));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Columns(a, start) => {
                let mut ga = Mat::zeros(self.value(*a).dim());
                ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                self.accumulate(grads, *a, ga);
            }
            Op::Concat(a, b) => {
                let k = self.value(*a).ncols();
                if self.tracked(*a) {
                    self.accumulate(grads, *a, g.slice(s![.., ..k]).to_owned());
                }
                if self.tracked(*b) {
                    self.accumulate(grads, *b, g.slice(s![.., k..]).to_owned());
                }
            }
            Op::Rows(a, index) => {
                let mut ga = Mat::zeros(self.value(*a).dim());
                for (src, &dst) in g.axis_iter(Axis(0)).zip(index) {
                    let mut row = ga.row_mut(dst);
                    row += &src;
                }
                self.accumulate(grads, *a, ga);
            }
            Op::RowSum(a) => {
                let dim = self.value(*a).dim();
                let mut ga = Mat::zeros(dim);
                for (mut row, gi) in ga.axis_iter_mut(Axis(0)).zip(g.iter()) {
                    row.fill(*gi);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let dim = self.value(*a).dim();
                self.accumulate(grads, *a, Mat::from_elem(dim, g[[0, 0]]));
            }
            Op::Mean(a) => {
                let m = self.value(*a);
                let c = g[[0, 0]] / m.len() as f64;
                self.accumulate(grads, *a, Mat::from_elem(m.dim(), c));
            }
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
