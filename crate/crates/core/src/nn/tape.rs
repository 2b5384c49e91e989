//! Reverse-mode differentiation over dense 2-D tensors.
//!
//! A [`Tape`] records every operation applied to its tensors. Each tensor is a
//! row-major `f64` matrix addressed by a [`Var`]; vectors are `1×n` or `n×1`
//! and scalars `1×1`. No operation broadcasts implicitly: bias addition has its
//! own op and shapes must otherwise match exactly.

use ndarray::{concatenate, Array2, Axis};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(CsrMatrix, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Ln(Var, f64),
    MeanRows(Var),
    RowSum(Var),
    SumAll(Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SquaredError(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients(Vec<Option<Array2<f64>>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Error {
    Error::Shape {
        op,
        left: a.dim(),
        right: b.dim(),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool, name: &str) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{name} produced a non-finite value")));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input.
    pub fn constant(&mut self, value: Array2<f64>) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// A trainable input whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Array2<f64>) -> Result<Var> {
        self.push(value, Op::Leaf, true, "param")
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(shape_err("matmul", x, y));
        }
        let out = x.dot(y);
        let rg = self.needs(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg, "matmul")
    }

    /// Constant sparse matrix times a tensor.
    pub fn spmm(&mut self, lhs: CsrMatrix, b: Var) -> Result<Var> {
        let out = lhs.mul_dense(self.value(b).view())?;
        let rg = self.needs(&[b]);
        self.push(out, Op::SpMM(lhs, b), rg, "spmm")
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dim() != y.dim() {
            return Err(shape_err(op, x, y));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(out, Op::Sub(a, b), rg, "sub")
    }

    /// Adds the `1×n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.nrows() != 1 || b.ncols() != x.ncols() {
            return Err(shape_err("add_row", x, b));
        }
        let out = x + &b.row(0);
        let rg = self.needs(&[a, bias]);
        self.push(out, Op::AddRow(a, bias), rg, "add_row")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(out, Op::Mul(a, b), rg, "mul")
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.value(a).mapv(|v| scale * v + shift);
        let rg = self.needs(&[a]);
        self.push(out, Op::Affine(a, scale), rg, "affine")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(|v| v.max(0.0));
        let rg = self.needs(&[a]);
        self.push(out, Op::Relu(a), rg, "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(sigmoid);
        let rg = self.needs(&[a]);
        self.push(out, Op::Sigmoid(a), rg, "sigmoid")
    }

    /// Natural log of `max(a, floor)`; the gradient is zero where the floor applies.
    pub fn ln(&mut self, a: Var, floor: f64) -> Result<Var> {
        let out = self.value(a).mapv(|v| v.max(floor).ln());
        let rg = self.needs(&[a]);
        self.push(out, Op::Ln(a, floor), rg, "ln")
    }

    /// Column-wise mean over rows: `r×c → 1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.nrows() == 0 {
            return Err(Error::Shape {
                op: "mean_rows",
                left: x.dim(),
                right: (1, x.ncols()),
            });
        }
        let out = x.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let rg = self.needs(&[a]);
        self.push(out, Op::MeanRows(a), rg, "mean_rows")
    }

    /// Sum across each row: `r×c → r×1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.needs(&[a]);
        self.push(out, Op::RowSum(a), rg, "row_sum")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.needs(&[a]);
        self.push(out, Op::SumAll(a), rg, "sum")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::Usage("concat_rows needs at least one tensor".into()));
        };
        let cols = self.value(*first).ncols();
        for p in parts {
            if self.value(*p).ncols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), self.value(*p)));
            }
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = concatenate(Axis(0), &views).map_err(|e| Error::Dimension(e.to_string()))?;
        let rg = self.needs(parts);
        self.push(out, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    /// Rows of `a` at `indices` (repeats allowed), stacked in order.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= x.nrows()) {
            return Err(Error::Dimension(format!("gather_rows index {bad} with {} rows", x.nrows())));
        }
        let out = x.select(Axis(0), &indices);
        let rg = self.needs(&[a]);
        self.push(out, Op::GatherRows(a, indices), rg, "gather_rows")
    }

    /// Row-major reshape to `rows×cols`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let x = self.value(a);
        if x.len() != rows * cols {
            return Err(Error::Shape {
                op: "reshape",
                left: x.dim(),
                right: (rows, cols),
            });
        }
        let out = Array2::from_shape_vec((rows, cols), x.iter().copied().collect())
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let rg = self.needs(&[a]);
        self.push(out, Op::Reshape(a), rg, "reshape")
    }

    /// `Σ (a − b)²` as a scalar.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("squared_error", a, b)?;
        let d = self.value(a) - self.value(b);
        let out = Array2::from_elem((1, 1), d.iter().map(|v| v * v).sum());
        let rg = self.needs(&[a, b]);
        self.push(out, Op::SquaredError(a, b), rg, "squared_error")
    }

    /// Gradients of the scalar `loss` with respect to every tensor that depends
    /// on a [`Tape::param`].
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let l = self.value(loss);
        if l.dim() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a 1x1 loss, got {:?}",
                l.dim()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut send = |v: Var, contrib: Array2<f64>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => *acc += &contrib,
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!("leaves keep their gradient"),
                Op::MatMul(a, b) => {
                    send(*a, g.dot(&self.value(*b).t()));
                    send(*b, self.value(*a).t().dot(&g));
                }
                Op::SpMM(lhs, b) => send(*b, lhs.transpose_mul_dense(g.view())?),
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    send(*b, -&g);
                    send(*a, g.clone());
                }
                Op::AddRow(a, bias) => {
                    send(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    send(*a, g.clone());
                }
                Op::Mul(a, b) => {
                    send(*a, &g * self.value(*b));
                    send(*b, &g * self.value(*a));
                }
                Op::Affine(a, scale) => send(*a, &g * *scale),
                Op::Relu(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*a), |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    send(*a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&node.value, |d, &s| *d *= s * (1.0 - s));
                    send(*a, d);
                }
                Op::Ln(a, floor) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*a), |d, &x| {
                        *d = if x > *floor { *d / x } else { 0.0 }
                    });
                    send(*a, d);
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let row = g.row(0).mapv(|v| v / x.nrows() as f64);
                    send(*a, Array2::from_shape_fn(x.dim(), |(_, j)| row[j]));
                }
                Op::RowSum(a) => {
                    let x = self.value(*a);
                    send(*a, Array2::from_shape_fn(x.dim(), |(i, _)| g[[i, 0]]));
                }
                Op::SumAll(a) => {
                    let x = self.value(*a);
                    send(*a, Array2::from_elem(x.dim(), g[[0, 0]]));
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let rows = self.value(*p).nrows();
                        send(*p, g.slice(ndarray::s![start..start + rows, ..]).to_owned());
                        start += rows;
                    }
                }
                Op::GatherRows(a, indices) => {
                    let mut d = Array2::zeros(self.value(*a).dim());
                    for (out_row, &src) in indices.iter().enumerate() {
                        let mut target = d.row_mut(src);
                        target += &g.row(out_row);
                    }
                    send(*a, d);
                }
                Op::Reshape(a) => {
                    let dim = self.value(*a).dim();
                    let d = Array2::from_shape_vec(dim, g.iter().copied().collect())
                        .map_err(|e| Error::Dimension(e.to_string()))?;
                    send(*a, d);
                }
                Op::SquaredError(a, b) => {
                    let scale = 2.0 * g[[0, 0]];
                    let diff = (self.value(*a) - self.value(*b)) * scale;
                    send(*b, -&diff);
                    send(*a, diff);
                }
            }
        }
        Ok(Gradients(grads))
    }
}
