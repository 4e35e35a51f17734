//! Dense double-precision tensors with a reverse-mode tape.
//!
//! A [`Graph`] records every operation as a node whose parents always have
//! smaller indices, so a single reverse sweep over the node list is a valid
//! topological order. Graphs are meant to be built for one step and dropped.

use crate::error::{Error, Result};

/// Row-major dense tensor. A scalar has an empty shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::BadTensor {
                shape,
                expected,
                actual: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            values: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// First value; the natural accessor for scalars.
    pub fn item(&self) -> f64 {
        self.values[0]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// (rows, cols) view: vectors are a single row, scalars are 1×1.
    fn as_matrix(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => (self.shape[0], self.shape[1..].iter().product()),
        }
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Tag for [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Log,
    Exp,
    Neg,
    MaxConst(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Log(Var),
    Exp(Var),
    MaxConst(Var, f64),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    MatMul(Var, Var),
    AddRow(Var, Var),
    LogSoftmax(Var),
    Pick(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Dot(Var, Vec<f64>),
    Identity(Var),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    stop_gradient: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `var`, or `None` when nothing flowed into it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }

    /// Gradient of `var` as a tensor; zeros when nothing flowed into it.
    pub fn tensor(&self, var: Var) -> Tensor {
        let shape = self.shapes[var.0].clone();
        match &self.grads[var.0] {
            Some(g) => Tensor {
                shape,
                values: g.clone(),
            },
            None => Tensor::zeros(&shape),
        }
    }
}

/// A reverse-mode tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            stop_gradient: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn is_stop_gradient(&self, var: Var) -> bool {
        self.nodes[var.0].stop_gradient
    }

    /// Dispatch on an op tag. Binary tags require `b`.
    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        let need_b = |b: Option<Var>| {
            b.ok_or(Error::ShapeMismatch {
                op: "elementwise",
                left: vec![],
                right: vec![],
            })
        };
        match op {
            ElementwiseOp::Add => self.add(a, need_b(b)?),
            ElementwiseOp::Sub => self.sub(a, need_b(b)?),
            ElementwiseOp::Mul => self.mul(a, need_b(b)?),
            ElementwiseOp::Div => self.div(a, need_b(b)?),
            ElementwiseOp::Log => Ok(self.log(a)),
            ElementwiseOp::Exp => Ok(self.exp(a)),
            ElementwiseOp::Neg => Ok(self.neg(a)),
            ElementwiseOp::MaxConst(c) => Ok(self.max_const(a, c)),
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let values: Vec<f64> = if va.shape == vb.shape {
            va.values
                .iter()
                .zip(&vb.values)
                .map(|(&x, &y)| f(x, y))
                .collect()
        } else if vb.numel() == 1 && vb.shape.len() <= va.shape.len() {
            let y = vb.values[0];
            va.values.iter().map(|&x| f(x, y)).collect()
        } else if va.numel() == 1 && va.shape.len() <= vb.shape.len() {
            let x = va.values[0];
            vb.values.iter().map(|&y| f(x, y)).collect()
        } else {
            return Err(Error::ShapeMismatch {
                op: name,
                left: va.shape.clone(),
                right: vb.shape.clone(),
            });
        };
        let shape = if va.numel() >= vb.numel() {
            va.shape.clone()
        } else {
            vb.shape.clone()
        };
        Ok(Tensor { shape, values })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("div", a, b, |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = &self.nodes[a.0].value;
        let t = Tensor {
            shape: src.shape.clone(),
            values: src.values.iter().map(|&x| f(x)).collect(),
        };
        self.push(t, op)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// `max(a, c)` elementwise; gradient flows only where `a > c`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x.max(c), Op::MaxConst(a, c))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// Same value, but no gradient reaches `a` through the returned node.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let t = self.nodes[a.0].value.clone();
        let v = self.push(t, Op::Identity(a));
        self.nodes[v.0].stop_gradient = true;
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape.len() != 2 || vb.shape.len() != 2 || va.shape[1] != vb.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: va.shape.clone(),
                right: vb.shape.clone(),
            });
        }
        let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &va.values, false, &vb.values, false, &mut out);
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                values: out,
            },
            Op::MatMul(a, b),
        ))
    }

    /// Adds a `[1×C]` or `[C]` row to every row of an `[R×C]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        let (rows, cols) = va.as_matrix();
        if va.shape.len() != 2 || vr.numel() != cols {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: va.shape.clone(),
                right: vr.shape.clone(),
            });
        }
        let mut values = va.values.clone();
        for r in 0..rows {
            for (x, b) in values[r * cols..(r + 1) * cols].iter_mut().zip(&vr.values) {
                *x += b;
            }
        }
        Ok(self.push(
            Tensor {
                shape: va.shape.clone(),
                values,
            },
            Op::AddRow(a, row),
        ))
    }

    /// Row-wise log-softmax of a `[V]` vector or `[T×V]` matrix,
    /// stabilized by subtracting each row's maximum.
    pub fn log_softmax(&mut self, logits: Var) -> Result<Var> {
        let v = &self.nodes[logits.0].value;
        if !v.is_finite() {
            return Err(Error::NonFinite("log_softmax input".into()));
        }
        let (rows, cols) = v.as_matrix();
        let mut values = v.values.clone();
        for r in 0..rows {
            log_softmax_in_place(&mut values[r * cols..(r + 1) * cols]);
        }
        let shape = v.shape.clone();
        Ok(self.push(Tensor { shape, values }, Op::LogSoftmax(logits)))
    }

    /// Picks `a[r, cols[r]]` from each row of an `[R×C]` matrix, giving `[R]`.
    pub fn pick_rows(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let (rows, width) = v.as_matrix();
        if cols.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "pick",
                left: v.shape.clone(),
                right: vec![cols.len()],
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::TokenOutOfRange {
                id: bad,
                vocab: width,
            });
        }
        let values = cols
            .iter()
            .enumerate()
            .map(|(r, &c)| v.values[r * width + c])
            .collect();
        Ok(self.push(
            Tensor {
                shape: vec![rows],
                values,
            },
            Op::Pick(a, cols.to_vec()),
        ))
    }

    /// Embedding lookup: rows `ids` of an `[N×D]` table, giving `[len×D]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let v = &self.nodes[table.0].value;
        let (n, d) = v.as_matrix();
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::TokenOutOfRange { id: bad, vocab: n });
        }
        let mut values = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            values.extend_from_slice(&v.values[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            Tensor {
                shape: vec![ids.len(), d],
                values,
            },
            Op::GatherRows(table, ids.to_vec()),
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_rows"))?;
        let cols = self.nodes[first.0].value.as_matrix().1;
        let mut rows = 0;
        let mut values = Vec::new();
        for p in parts {
            let v = &self.nodes[p.0].value;
            let (r, c) = v.as_matrix();
            if c != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    left: self.nodes[first.0].value.shape.clone(),
                    right: v.shape.clone(),
                });
            }
            rows += r;
            values.extend_from_slice(&v.values);
        }
        Ok(self.push(
            Tensor {
                shape: vec![rows, cols],
                values,
            },
            Op::ConcatRows(parts.to_vec()),
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        if shape.iter().product::<usize>() != v.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: v.shape.clone(),
                right: shape,
            });
        }
        let t = Tensor {
            shape,
            values: v.values.clone(),
        };
        Ok(self.push(t, Op::Reshape(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.values.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// `Σ coeffs[i]·a[i]` with constant coefficients.
    pub fn dot_const(&mut self, a: Var, coeffs: &[f64]) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        if v.numel() != coeffs.len() {
            return Err(Error::ShapeMismatch {
                op: "dot_const",
                left: v.shape.clone(),
                right: vec![coeffs.len()],
            });
        }
        let s = v.values.iter().zip(coeffs).map(|(x, c)| x * c).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, coeffs.to_vec())))
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_val = &self.nodes[output.0].value;
        if out_val.numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: out_val.shape.clone(),
                right: vec![],
            });
        }
        let n = output.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.stop_gradient {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let y = &node.value.values;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate_broadcast(grads, *a, val(*a).numel(), g.iter().copied());
                accumulate_broadcast(grads, *b, val(*b).numel(), g.iter().copied());
            }
            Op::Sub(a, b) => {
                accumulate_broadcast(grads, *a, val(*a).numel(), g.iter().copied());
                accumulate_broadcast(grads, *b, val(*b).numel(), g.iter().map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let ga = g.iter().enumerate().map(|(i, gi)| gi * at(vb, i));
                accumulate_broadcast(grads, *a, va.numel(), ga);
                let gb = g.iter().enumerate().map(|(i, gi)| gi * at(va, i));
                accumulate_broadcast(grads, *b, vb.numel(), gb);
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let ga = g.iter().enumerate().map(|(i, gi)| gi / at(vb, i));
                accumulate_broadcast(grads, *a, va.numel(), ga);
                let gb = g.iter().enumerate().map(|(i, gi)| {
                    let d = at(vb, i);
                    -gi * at(va, i) / (d * d)
                });
                accumulate_broadcast(grads, *b, vb.numel(), gb);
            }
            Op::Neg(a) => accumulate(grads, *a, g.iter().map(|x| -x)),
            Op::Log(a) => {
                let x = &val(*a).values;
                accumulate(grads, *a, g.iter().zip(x).map(|(gi, xi)| gi / xi));
            }
            Op::Exp(a) => accumulate(grads, *a, g.iter().zip(y).map(|(gi, yi)| gi * yi)),
            Op::MaxConst(a, c) => {
                let x = &val(*a).values;
                let it = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| if *xi > *c { *gi } else { 0.0 });
                accumulate(grads, *a, it);
            }
            Op::Scale(a, k) => accumulate(grads, *a, g.iter().map(|x| k * x)),
            Op::Sigmoid(a) => {
                accumulate(grads, *a, g.iter().zip(y).map(|(gi, s)| gi * s * (1.0 - s)))
            }
            Op::Tanh(a) => {
                accumulate(grads, *a, g.iter().zip(y).map(|(gi, t)| gi * (1.0 - t * t)))
            }
            Op::Identity(a) | Op::Reshape(a) => accumulate(grads, *a, g.iter().copied()),
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[1]);
                let ga = slot(grads, *a, m * k);
                gemm(m, n, k, g, false, &vb.values, true, ga);
                let gb = slot(grads, *b, k * n);
                gemm(k, m, n, &va.values, true, g, false, gb);
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.iter().copied());
                let cols = val(*row).numel();
                let gr = slot(grads, *row, cols);
                for chunk in g.chunks(cols) {
                    for (dst, x) in gr.iter_mut().zip(chunk) {
                        *dst += x;
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let (rows, cols) = val(*a).as_matrix();
                let ga = slot(grads, *a, rows * cols);
                for r in 0..rows {
                    let span = r * cols..(r + 1) * cols;
                    let gs: f64 = g[span.clone()].iter().sum();
                    for j in span {
                        ga[j] += g[j] - y[j].exp() * gs;
                    }
                }
            }
            Op::Pick(a, cols) => {
                let width = val(*a).as_matrix().1;
                let ga = slot(grads, *a, val(*a).numel());
                for (r, &c) in cols.iter().enumerate() {
                    ga[r * width + c] += g[r];
                }
            }
            Op::GatherRows(table, ids) => {
                let d = val(*table).as_matrix().1;
                let gt = slot(grads, *table, val(*table).numel());
                for (r, &i) in ids.iter().enumerate() {
                    for (dst, x) in gt[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                        *dst += x;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = val(*p).numel();
                    accumulate(grads, *p, g[offset..offset + len].iter().copied());
                    offset += len;
                }
            }
            Op::Sum(a) => {
                let n = val(*a).numel();
                accumulate(grads, *a, std::iter::repeat_n(g[0], n));
            }
            Op::Dot(a, coeffs) => accumulate(grads, *a, coeffs.iter().map(|c| c * g[0])),
        }
    }
}

fn at(t: &Tensor, i: usize) -> f64 {
    if t.values.len() == 1 {
        t.values[0]
    } else {
        t.values[i]
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, it: impl ExactSizeIterator<Item = f64>) {
    let dst = slot(grads, v, it.len());
    for (d, x) in dst.iter_mut().zip(it) {
        *d += x;
    }
}

/// Accumulates, summing everything into one slot when the target was a
/// broadcast scalar.
fn accumulate_broadcast(
    grads: &mut [Option<Vec<f64>>],
    v: Var,
    numel: usize,
    it: impl ExactSizeIterator<Item = f64>,
) {
    if numel == 1 && it.len() != 1 {
        let s: f64 = it.sum();
        slot(grads, v, 1)[0] += s;
    } else {
        accumulate(grads, v, it);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place log-softmax of one row.
pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    for x in row.iter_mut() {
        *x -= lse;
    }
}

/// `c += op(a)·op(b)` where `op(a)` is `m×k` and `op(b)` is `k×n`, row-major.
/// A transposed operand is stored untransposed (`k×m` / `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and strides stay in bounds for
    // the declared row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Max relative error between the tape gradient of a scalar function and a
/// central finite difference, over every coordinate of `point`:
/// `|ad − fd| / (|fd| + 1e-12)`.
pub fn finite_diff_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(t);
        let y = f(&mut g, x)?;
        let v = g.value(y).item();
        if !v.is_finite() {
            return Err(Error::NonFinite("finite_diff_check evaluation".into()));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let x = g.leaf(point.clone());
    let y = f(&mut g, x)?;
    if !g.value(y).item().is_finite() {
        return Err(Error::NonFinite("finite_diff_check evaluation".into()));
    }
    let ad = g.backward(y)?.tensor(x);

    let mut worst: f64 = 0.0;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.values[i] += eps;
        let mut minus = point.clone();
        minus.values[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (ad.values[i] - fd).abs() / (fd.abs() + 1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_close(ad: f64, f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        (ad - fd).abs()
    }

    #[test]
    fn log_of_one_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(1.0);
        let y = g.log(x);
        assert_eq!(g.value(y).item(), 0.0);
    }

    #[test]
    fn mul_by_one_is_identity() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.5, -2.0, 3.25]));
        let one = g.constant(1.0);
        let y = g.mul(x, one).unwrap();
        assert_eq!(g.value(y).values(), &[1.5, -2.0, 3.25]);
    }

    #[test]
    fn log_derivative_matches_finite_difference() {
        let mut g = Graph::new();
        let x = g.constant(2.0);
        let y = g.log(x);
        let grads = g.backward(y).unwrap();
        let ad = grads.get(x).unwrap()[0];
        assert!((ad - 0.5).abs() < 1e-15);
        assert!(fd_close(ad, f64::ln, 2.0) < 1e-8);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let err = g.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn matmul_identity_and_degenerate() {
        let mut g = Graph::new();
        let id = g.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let a = g.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let p = g.matmul(id, a).unwrap();
        assert_eq!(g.value(p), g.value(a));

        let x = g.leaf(Tensor::matrix(1, 1, vec![3.0]).unwrap());
        let y = g.leaf(Tensor::matrix(1, 1, vec![-2.5]).unwrap());
        let xy = g.matmul(x, y).unwrap();
        assert_eq!(g.value(xy).item(), -7.5);

        let bad = g.matmul(a, a).unwrap_err();
        assert!(matches!(bad, Error::ShapeMismatch { op: "matmul", .. }));
    }

    #[test]
    fn matmul_sum_gradient_is_ones_times_bt() {
        let a_vals = vec![0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
        let b_vals = vec![1.0, 2.0, -1.0, 0.5, 0.25, 3.0, -2.0, 1.5, 0.0, 0.75, 1.25, -0.5];
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(2, 3, a_vals.clone()).unwrap());
        let b = g.leaf(Tensor::matrix(3, 4, b_vals.clone()).unwrap());
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        let ga = grads.get(a).unwrap();
        // (ones[2x4] · Bᵀ)[i, k] = Σ_j B[k, j]
        for i in 0..2 {
            for k in 0..3 {
                let row_sum: f64 = b_vals[k * 4..(k + 1) * 4].iter().sum();
                assert!((ga[i * 3 + k] - row_sum).abs() < 1e-12);
            }
        }
        let b_point = Tensor::matrix(3, 4, b_vals).unwrap();
        let a_tensor = Tensor::matrix(2, 3, a_vals).unwrap();
        let err = finite_diff_check(
            |g, x| {
                let bb = g.leaf(b_point.clone());
                let c = g.matmul(x, bb)?;
                Ok(g.sum(c))
            },
            &a_tensor,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn log_softmax_uniform_and_overflow() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.7; 4]));
        let y = g.log_softmax(x).unwrap();
        for v in g.value(y).values() {
            assert!((v - 0.25f64.ln()).abs() < 1e-15);
        }

        let x = g.leaf(Tensor::vector(vec![1000.0, 0.0]));
        let y = g.log_softmax(x).unwrap();
        let p: Vec<f64> = g.value(y).values().iter().map(|v| v.exp()).collect();
        // log p1 = -1000 - log1p(e^-1000) exactly -1000 in f64; p0 = 1 - e^-1000 = 1.
        assert_eq!(p[0], 1.0);
        assert_eq!(g.value(y).values()[1], -1000.0);
        assert!(p[1] < 1e-300);

        let x = g.leaf(Tensor::vector(vec![f64::NAN, 0.0]));
        assert!(g.log_softmax(x).is_err());
    }

    #[test]
    fn log_softmax_gradient_matches_fd() {
        let point = Tensor::vector(vec![0.3, -1.1, 2.2, 0.05, -0.6]);
        let coeffs = [0.9, -0.4, 1.3, 0.2, -1.7];
        let err = finite_diff_check(
            |g, x| {
                let y = g.log_softmax(x)?;
                g.dot_const(y, &coeffs)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn stop_gradient_contract() {
        let mut g = Graph::new();
        let x = g.constant(0.5);
        let sx = g.stop_gradient(x);
        assert_eq!(g.value(sx).item().to_bits(), g.value(x).item().to_bits());
        assert!(g.is_stop_gradient(sx));
        let lx = g.log(x);
        let y = g.mul(sx, lx).unwrap();
        let grads = g.backward(y).unwrap();
        assert!((grads.get(x).unwrap()[0] - 1.0).abs() < 1e-15);

        let mut g = Graph::new();
        let x = g.constant(0.5);
        let sx = g.stop_gradient(x);
        let grads = g.backward(sx).unwrap();
        assert!(grads.get(x).is_none());
        assert_eq!(grads.tensor(x).item(), 0.0);
    }

    #[test]
    fn finite_diff_check_examples() {
        let err = finite_diff_check(
            |g, x| g.mul(x, x),
            &Tensor::scalar(3.0),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");

        let err = finite_diff_check(|g, _x| Ok(g.constant(4.0)), &Tensor::scalar(3.0), 1e-5)
            .unwrap();
        assert_eq!(err, 0.0);

        let bad = finite_diff_check(|g, x| Ok(g.log(x)), &Tensor::scalar(-1.0), 1e-5);
        assert!(matches!(bad, Err(Error::NonFinite(_))));
    }

    #[test]
    fn shared_subgraph_accumulates() {
        let mut g = Graph::new();
        let x = g.constant(1.75);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap()[0], 3.5);
    }

    #[test]
    fn elementwise_dispatch() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, -2.0]));
        let b = g.constant(3.0);
        let y = g.elementwise(ElementwiseOp::Sub, a, Some(b)).unwrap();
        assert_eq!(g.value(y).values(), &[-2.0, -5.0]);
        let m = g.elementwise(ElementwiseOp::MaxConst(0.0), a, None).unwrap();
        assert_eq!(g.value(m).values(), &[1.0, 0.0]);
        assert!(g.elementwise(ElementwiseOp::Mul, a, None).is_err());
    }
}
