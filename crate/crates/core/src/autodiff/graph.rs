use std::cell::RefCell;

use statrs::function::gamma::{digamma, ln_gamma};

use super::kernels;
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Softplus,
    LnGamma,
}

impl Unary {
    fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Unary::LnGamma => ln_gamma(x),
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Softplus => sigmoid(x),
            Unary::LnGamma => digamma(x),
        }
    }

    fn eval_all(self, xs: &[f64]) -> Vec<f64> {
        // One loop per kind so that the cheap ones vectorize.
        match self {
            Unary::Relu => xs.iter().map(|x| x.max(0.0)).collect(),
            Unary::Tanh => xs.iter().map(|x| x.tanh()).collect(),
            Unary::Sigmoid => xs.iter().map(|&x| sigmoid(x)).collect(),
            other => xs.iter().map(|&x| other.eval(x)).collect(),
        }
    }

    fn backprop(self, acc: &mut [f64], g: &[f64], xs: &[f64], ys: &[f64]) {
        let it = acc.iter_mut().zip(g).zip(xs.iter().zip(ys));
        match self {
            Unary::Relu => it.for_each(|((a, g), (x, _))| *a += if *x > 0.0 { *g } else { 0.0 }),
            Unary::Tanh => it.for_each(|((a, g), (_, y))| *a += g * (1.0 - y * y)),
            Unary::Sigmoid => it.for_each(|((a, g), (_, y))| *a += g * y * (1.0 - y)),
            other => it.for_each(|((a, g), (x, y))| *a += g * other.derivative(*x, *y)),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Softplus => "softplus",
            Unary::LnGamma => "ln_gamma",
        }
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

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Selection {
    Max,
    Percentile,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Unary(Unary, Var),
    Expand {
        src: Var,
        axis: usize,
        len: usize,
    },
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        src: Var,
        axis: usize,
        start: usize,
    },
    Sum {
        src: Var,
        axis: usize,
    },
    Mean {
        src: Var,
        axis: usize,
    },
    Select {
        src: Var,
        axis: usize,
        picks: Vec<usize>,
        kind: Selection,
    },
    /// Keeps the softmax weights for the backward pass.
    LogSumExp {
        src: Var,
        axis: usize,
        weights: Vec<f64>,
    },
    AddRow(Var, Var),
    RowDot(Var, Var),
    ScaleRows(Var, Var),
    Softmax {
        src: Var,
        axis: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul(..) => "matmul",
            Op::Binary(Binary::Add, ..) => "add",
            Op::Binary(Binary::Sub, ..) => "sub",
            Op::Binary(Binary::Mul, ..) => "mul",
            Op::Binary(Binary::Div, ..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Unary(u, _) => u.name(),
            Op::Expand { .. } => "expand",
            Op::Reshape(..) => "reshape",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Sum { .. } => "reduce_sum",
            Op::Mean { .. } => "reduce_mean",
            Op::Select {
                kind: Selection::Max, ..
            } => "reduce_max",
            Op::Select { .. } => "sort_select",
            Op::LogSumExp { .. } => "logsumexp",
            Op::Softmax { .. } => "softmax",
            Op::AddRow(..) => "add_row",
            Op::RowDot(..) => "row_dot",
            Op::ScaleRows(..) => "scale_rows",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Matmul(a, b) | Op::Binary(_, a, b) | Op::AddRow(a, b) | Op::RowDot(a, b) | Op::ScaleRows(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _) | Op::Offset(a) | Op::Unary(_, a) | Op::Reshape(a) => vec![*a],
            Op::Expand { src, .. }
            | Op::Slice { src, .. }
            | Op::Sum { src, .. }
            | Op::Mean { src, .. }
            | Op::Select { src, .. }
            | Op::LogSumExp { src, .. }
            | Op::Softmax { src, .. } => vec![*src],
            Op::Concat { parts, .. } => parts.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Primitive kinds accepted by [`Graph::apply`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    Matmul,
    Add,
    Sub,
    Mul,
    Div,
    /// Repeats a `[.., k]` value into `[.., rows, k]`.
    BroadcastRow(usize),
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Softplus,
    Concat(usize),
    Slice {
        axis: usize,
        start: usize,
        end: usize,
    },
    ReduceSum(usize),
    ReduceMean(usize),
    ReduceMax(usize),
    LogSumExp(usize),
    Softmax(usize),
    SortSelect {
        axis: usize,
        percentile: f64,
    },
}

/// Define-by-run tape. Values are appended in evaluation order, so node
/// indices are a topological order and the reverse sweep needs no sort.
///
/// A graph is built for one forward pass and dropped afterwards; it is not
/// `Sync`.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.parents().iter().any(|p| nodes[p.0].requires_grad);
        nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn push_leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn scalar_constant(&self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes.borrow()[v.0].value.shape().clone()
    }

    pub fn dims(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.dims().to_vec()
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    /// First element of `v`; meant for scalars.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.data()[0]
    }

    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let nodes = self.nodes.borrow();
        let node = &nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::from_shape(node.value.shape().clone(), g.clone()).expect("grad shape"))
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes.borrow()[v.0].op.name()
    }

    pub fn parents(&self, v: Var) -> Vec<Var> {
        self.nodes.borrow()[v.0].op.parents()
    }

    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }

    fn check_axis(&self, op: &'static str, v: Var, axis: usize) -> Result<Shape> {
        let shape = self.shape(v);
        if axis >= shape.rank() {
            return Err(Error::InvalidAxis {
                op,
                axis,
                rank: shape.rank(),
            });
        }
        Ok(shape)
    }

    /// Dispatches a primitive by kind.
    pub fn apply(&self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let unary = |f: fn(&Graph, Var) -> Var| -> Result<Var> {
            match inputs {
                [x] => Ok(f(self, *x)),
                _ => Err(Error::InvalidConfig(format!(
                    "{kind:?} takes one input, got {}",
                    inputs.len()
                ))),
            }
        };
        let pair = || -> Result<(Var, Var)> {
            match inputs {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::InvalidConfig(format!(
                    "{kind:?} takes two inputs, got {}",
                    inputs.len()
                ))),
            }
        };
        let single = || -> Result<Var> {
            match inputs {
                [x] => Ok(*x),
                _ => Err(Error::InvalidConfig(format!(
                    "{kind:?} takes one input, got {}",
                    inputs.len()
                ))),
            }
        };
        match kind {
            OpKind::Matmul => pair().and_then(|(a, b)| self.matmul(a, b)),
            OpKind::Add => pair().and_then(|(a, b)| self.add(a, b)),
            OpKind::Sub => pair().and_then(|(a, b)| self.sub(a, b)),
            OpKind::Mul => pair().and_then(|(a, b)| self.mul(a, b)),
            OpKind::Div => pair().and_then(|(a, b)| self.div(a, b)),
            OpKind::BroadcastRow(rows) => self.broadcast_row(single()?, rows),
            OpKind::Relu => unary(Graph::relu),
            OpKind::Tanh => unary(Graph::tanh),
            OpKind::Sigmoid => unary(Graph::sigmoid),
            OpKind::Exp => unary(Graph::exp),
            OpKind::Log => unary(Graph::log),
            OpKind::Softplus => unary(Graph::softplus),
            OpKind::Concat(axis) => self.concat(inputs, axis),
            OpKind::Slice { axis, start, end } => self.slice(single()?, axis, start, end),
            OpKind::ReduceSum(axis) => self.reduce_sum(single()?, axis),
            OpKind::ReduceMean(axis) => self.reduce_mean(single()?, axis),
            OpKind::ReduceMax(axis) => self.reduce_max(single()?, axis),
            OpKind::LogSumExp(axis) => self.logsumexp(single()?, axis),
            OpKind::Softmax(axis) => self.softmax(single()?, axis),
            OpKind::SortSelect { axis, percentile } => self.sort_select(single()?, axis, percentile),
        }
    }

    // ---- linear algebra -------------------------------------------------

    /// `[.., k] · [k × m] → [.., m]`; leading axes are flattened into rows.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let mismatch = || Error::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().clone(),
                rhs: bv.shape().clone(),
            };
            if av.shape().rank() == 0 || bv.shape().rank() != 2 {
                return Err(mismatch());
            }
            let k = av.shape().last();
            let (bk, m) = (bv.dims()[0], bv.dims()[1]);
            if k != bk {
                return Err(mismatch());
            }
            let rows = av.numel() / k.max(1);
            let mut out = vec![0.0; rows * m];
            kernels::gemm(rows, k, m, av.data(), false, bv.data(), false, &mut out);
            let mut dims = av.dims().to_vec();
            *dims.last_mut().unwrap() = m;
            Tensor::new(dims, out)?
        };
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    // ---- elementwise ----------------------------------------------------

    fn binary(&self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if av.shape() != bv.shape() {
                return Err(Error::ShapeMismatch {
                    op: Op::Binary(kind, a, b).name(),
                    lhs: av.shape().clone(),
                    rhs: bv.shape().clone(),
                });
            }
            let f: fn(f64, f64) -> f64 = match kind {
                Binary::Add => |x, y| x + y,
                Binary::Sub => |x, y| x - y,
                Binary::Mul => |x, y| x * y,
                Binary::Div => |x, y| x / y,
            };
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::from_shape(av.shape().clone(), data)?
        };
        Ok(self.push(value, Op::Binary(kind, a, b)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        let value = self.map_value(x, |v| c * v);
        self.push(value, Op::Scale(x, c))
    }

    /// `x + c` elementwise.
    pub fn offset(&self, x: Var, c: f64) -> Var {
        let value = self.map_value(x, |v| v + c);
        self.push(value, Op::Offset(x))
    }

    fn map_value(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let nodes = self.nodes.borrow();
        let xv = &nodes[x.0].value;
        let data = xv.data().iter().map(|&v| f(v)).collect();
        Tensor::from_shape(xv.shape().clone(), data).expect("same shape")
    }

    pub fn unary(&self, kind: Unary, x: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            Tensor::from_shape(xv.shape().clone(), kind.eval_all(xv.data())).expect("same shape")
        };
        self.push(value, Op::Unary(kind, x))
    }

    pub fn relu(&self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn exp(&self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn log(&self, x: Var) -> Var {
        self.unary(Unary::Log, x)
    }

    pub fn softplus(&self, x: Var) -> Var {
        self.unary(Unary::Softplus, x)
    }

    pub fn ln_gamma(&self, x: Var) -> Var {
        self.unary(Unary::LnGamma, x)
    }

    pub fn square(&self, x: Var) -> Var {
        self.mul(x, x).expect("same shape")
    }

    // ---- shape manipulation ---------------------------------------------

    /// Inserts a new axis of extent `len` at `axis`, repeating the value.
    pub fn expand(&self, x: Var, axis: usize, len: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            if axis > xv.shape().rank() {
                return Err(Error::InvalidAxis {
                    op: "expand",
                    axis,
                    rank: xv.shape().rank(),
                });
            }
            let shape = xv.shape().with_axis(axis, len)?;
            let outer: usize = xv.dims()[..axis].iter().product();
            let inner: usize = xv.dims()[axis..].iter().product();
            let src = xv.data();
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let block = &src[o * inner..(o + 1) * inner];
                for _ in 0..len {
                    data.extend_from_slice(block);
                }
            }
            Tensor::from_shape(shape, data)?
        };
        Ok(self.push(value, Op::Expand { src: x, axis, len }))
    }

    /// `[.., k] → [.., rows, k]`.
    pub fn broadcast_row(&self, x: Var, rows: usize) -> Result<Var> {
        let rank = self.shape(x).rank();
        self.expand(x, rank.saturating_sub(1), rows)
    }

    /// `[..] → [.., cols]`.
    pub fn broadcast_col(&self, x: Var, cols: usize) -> Result<Var> {
        let rank = self.shape(x).rank();
        self.expand(x, rank, cols)
    }

    /// Adds a `[m]` bias to every row of a `[.., m]` value.
    pub fn add_row(&self, x: Var, bias: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (xv, bv) = (&nodes[x.0].value, &nodes[bias.0].value);
            let m = bv.numel();
            if bv.shape().rank() != 1 || xv.shape().rank() == 0 || xv.shape().last() != m {
                return Err(Error::ShapeMismatch {
                    op: "add_row",
                    lhs: xv.shape().clone(),
                    rhs: bv.shape().clone(),
                });
            }
            let mut data = xv.data().to_vec();
            for row in data.chunks_mut(m.max(1)) {
                add_into(row, bv.data());
            }
            Tensor::from_shape(xv.shape().clone(), data)?
        };
        Ok(self.push(value, Op::AddRow(x, bias)))
    }

    /// Row-wise dot products: `[.., n, k] × [.., k] → [.., n]`.
    pub fn row_dot(&self, e: Var, q: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ev, qv) = (&nodes[e.0].value, &nodes[q.0].value);
            let (outer, n, k) = row_layout("row_dot", ev, qv, 0)?;
            let (ed, qd) = (ev.data(), qv.data());
            let mut out = Vec::with_capacity(outer * n);
            for o in 0..outer {
                let qo = &qd[o * k..(o + 1) * k];
                for j in 0..n {
                    let row = &ed[(o * n + j) * k..(o * n + j + 1) * k];
                    out.push(row.iter().zip(qo).map(|(a, b)| a * b).sum());
                }
            }
            Tensor::new(ev.dims()[..ev.dims().len() - 1].to_vec(), out)?
        };
        Ok(self.push(value, Op::RowDot(e, q)))
    }

    /// Multiplies each row of `[.., n, k]` by the matching entry of `[.., n]`.
    pub fn scale_rows(&self, e: Var, w: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ev, wv) = (&nodes[e.0].value, &nodes[w.0].value);
            let (_, _, k) = row_layout("scale_rows", ev, wv, 1)?;
            let mut data = ev.data().to_vec();
            for (row, &c) in data.chunks_mut(k.max(1)).zip(wv.data()) {
                row.iter_mut().for_each(|v| *v *= c);
            }
            Tensor::from_shape(ev.shape().clone(), data)?
        };
        Ok(self.push(value, Op::ScaleRows(e, w)))
    }

    pub fn reshape(&self, x: Var, dims: &[usize]) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            let shape = Shape::new(dims.to_vec())?;
            if shape.numel() != xv.numel() {
                return Err(Error::ShapeMismatch {
                    op: "reshape",
                    lhs: xv.shape().clone(),
                    rhs: shape,
                });
            }
            Tensor::from_shape(shape, xv.data().to_vec())?
        };
        Ok(self.push(value, Op::Reshape(x)))
    }

    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let first = match parts.first() {
                Some(p) => nodes[p.0].value.shape().clone(),
                None => return Err(Error::EmptyReduction { op: "concat" }),
            };
            if axis >= first.rank() {
                return Err(Error::InvalidAxis {
                    op: "concat",
                    axis,
                    rank: first.rank(),
                });
            }
            let mut total = 0;
            for p in parts {
                let s = nodes[p.0].value.shape();
                if s.rank() != first.rank()
                    || s.dims()
                        .iter()
                        .zip(first.dims())
                        .enumerate()
                        .any(|(i, (a, b))| i != axis && a != b)
                {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        lhs: first.clone(),
                        rhs: s.clone(),
                    });
                }
                total += s.dims()[axis];
            }
            let shape = first.with_dim(axis, total);
            let (outer, _, inner) = shape.split_at_axis(axis);
            let mut data = Vec::with_capacity(shape.numel());
            for o in 0..outer {
                for p in parts {
                    let v = &nodes[p.0].value;
                    let block = v.dims()[axis] * inner;
                    data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
                }
            }
            Tensor::from_shape(shape, data)?
        };
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.check_axis("slice", x, axis)?;
        if start > end || end > shape.dims()[axis] {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: shape.clone(),
                rhs: Shape::new(vec![start, end])?,
            });
        }
        let value = {
            let nodes = self.nodes.borrow();
            let src = nodes[x.0].value.data();
            let (outer, len, inner) = shape.split_at_axis(axis);
            let width = end - start;
            let mut data = Vec::with_capacity(outer * width * inner);
            for o in 0..outer {
                let base = o * len * inner;
                data.extend_from_slice(&src[base + start * inner..base + end * inner]);
            }
            Tensor::from_shape(shape.with_dim(axis, width), data)?
        };
        Ok(self.push(value, Op::Slice { src: x, axis, start }))
    }

    // ---- reductions -----------------------------------------------------

    fn sum_along(&self, op: &'static str, x: Var, axis: usize, scale: f64) -> Result<Tensor> {
        let shape = self.check_axis(op, x, axis)?;
        let (outer, len, inner) = shape.split_at_axis(axis);
        if len == 0 {
            return Err(Error::EmptyReduction { op });
        }
        let nodes = self.nodes.borrow();
        let src = nodes[x.0].value.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let acc = &mut out[o * inner..(o + 1) * inner];
            for j in 0..len {
                let row = &src[(o * len + j) * inner..(o * len + j + 1) * inner];
                add_into(acc, row);
            }
            if scale != 1.0 {
                acc.iter_mut().for_each(|a| *a *= scale);
            }
        }
        Tensor::from_shape(shape.without_axis(axis), out)
    }

    pub fn reduce_sum(&self, x: Var, axis: usize) -> Result<Var> {
        let value = self.sum_along("reduce_sum", x, axis, 1.0)?;
        Ok(self.push(value, Op::Sum { src: x, axis }))
    }

    pub fn reduce_mean(&self, x: Var, axis: usize) -> Result<Var> {
        let len = self.check_axis("reduce_mean", x, axis)?.dims()[axis];
        let value = self.sum_along("reduce_mean", x, axis, 1.0 / len as f64)?;
        Ok(self.push(value, Op::Mean { src: x, axis }))
    }

    fn select(&self, x: Var, axis: usize, kind: Selection, percentile: f64) -> Result<Var> {
        let op = match kind {
            Selection::Max => "reduce_max",
            Selection::Percentile => "sort_select",
        };
        let shape = self.check_axis(op, x, axis)?;
        let (outer, len, inner) = shape.split_at_axis(axis);
        if len == 0 {
            return Err(Error::EmptyReduction { op });
        }
        let (values, picks) = {
            let nodes = self.nodes.borrow();
            let src = nodes[x.0].value.data();
            let rank = (percentile * (len - 1) as f64).floor() as usize;
            let mut values = Vec::with_capacity(outer * inner);
            let mut picks = Vec::with_capacity(outer * inner);
            let mut order: Vec<usize> = Vec::with_capacity(len);
            let mut best = vec![0usize; inner];
            for o in 0..outer {
                if kind == Selection::Max {
                    best.fill(0);
                    for j in 1..len {
                        let row = &src[(o * len + j) * inner..(o * len + j + 1) * inner];
                        for (i, (b, &v)) in best.iter_mut().zip(row).enumerate() {
                            if v > src[(o * len + *b) * inner + i] {
                                *b = j;
                            }
                        }
                    }
                }
                for i in 0..inner {
                    let at = |j: usize| src[(o * len + j) * inner + i];
                    let pick = match kind {
                        Selection::Max => best[i],
                        Selection::Percentile => {
                            order.clear();
                            order.extend(0..len);
                            order.sort_by(|&p, &q| at(p).total_cmp(&at(q)).then(p.cmp(&q)));
                            order[rank.min(len - 1)]
                        }
                    };
                    values.push(at(pick));
                    picks.push(pick);
                }
            }
            (values, picks)
        };
        let value = Tensor::from_shape(shape.without_axis(axis), values)?;
        Ok(self.push(
            value,
            Op::Select {
                src: x,
                axis,
                picks,
                kind,
            },
        ))
    }

    /// Maximum along `axis`; the gradient goes to the lowest-index maximizer.
    pub fn reduce_max(&self, x: Var, axis: usize) -> Result<Var> {
        self.select(x, axis, Selection::Max, 1.0)
    }

    /// Lower nearest-rank percentile along `axis`: the element at sorted
    /// position `floor(p · (len − 1))`. `p = 0` is the minimum, `p = 1` the
    /// maximum.
    pub fn sort_select(&self, x: Var, axis: usize, percentile: f64) -> Result<Var> {
        if !(0.0..=1.0).contains(&percentile) {
            return Err(Error::Domain(format!("percentile {percentile} outside [0, 1]")));
        }
        self.select(x, axis, Selection::Percentile, percentile)
    }

    pub fn logsumexp(&self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.check_axis("logsumexp", x, axis)?;
        let (outer, len, inner) = shape.split_at_axis(axis);
        if len == 0 {
            return Err(Error::EmptyReduction { op: "logsumexp" });
        }
        let (value, weights) = {
            let nodes = self.nodes.borrow();
            let src = nodes[x.0].value.data();
            let mut out = vec![f64::NEG_INFINITY; outer * inner];
            let mut weights = vec![0.0; src.len()];
            let mut total = vec![0.0; inner];
            for o in 0..outer {
                let m = &mut out[o * inner..(o + 1) * inner];
                for j in 0..len {
                    let row = &src[(o * len + j) * inner..(o * len + j + 1) * inner];
                    for (a, &v) in m.iter_mut().zip(row) {
                        *a = a.max(v);
                    }
                }
                total.fill(0.0);
                for j in 0..len {
                    let at = (o * len + j) * inner;
                    let row = &src[at..at + inner];
                    let w = &mut weights[at..at + inner];
                    for (((t, w), &v), &mx) in total.iter_mut().zip(w).zip(row).zip(m.iter()) {
                        if mx.is_finite() {
                            *w = (v - mx).exp();
                            *t += *w;
                        }
                    }
                }
                for j in 0..len {
                    let at = (o * len + j) * inner;
                    for (w, t) in weights[at..at + inner].iter_mut().zip(&total) {
                        if *t > 0.0 {
                            *w /= t;
                        }
                    }
                }
                for (a, t) in m.iter_mut().zip(&total) {
                    if a.is_finite() {
                        *a += t.ln();
                    }
                }
            }
            (Tensor::from_shape(shape.without_axis(axis), out)?, weights)
        };
        Ok(self.push(value, Op::LogSumExp { src: x, axis, weights }))
    }

    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.check_axis("softmax", x, axis)?;
        let (outer, len, inner) = shape.split_at_axis(axis);
        if len == 0 {
            return Err(Error::EmptyReduction { op: "softmax" });
        }
        let value = {
            let nodes = self.nodes.borrow();
            let src = nodes[x.0].value.data();
            let mut out = vec![0.0; src.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |j: usize| (o * len + j) * inner + i;
                    let m = (0..len).map(|j| src[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..len {
                        let e = (src[idx(j)] - m).exp();
                        out[idx(j)] = e;
                        total += e;
                    }
                    for j in 0..len {
                        out[idx(j)] /= total;
                    }
                }
            }
            Tensor::from_shape(shape, out)?
        };
        Ok(self.push(value, Op::Softmax { src: x, axis }))
    }

    /// Sum of all elements as a scalar.
    pub fn sum_all(&self, x: Var) -> Result<Var> {
        let n = self.shape(x).numel();
        let flat = self.reshape(x, &[n])?;
        self.reduce_sum(flat, 0)
    }

    pub fn mean_all(&self, x: Var) -> Result<Var> {
        let n = self.shape(x).numel();
        let flat = self.reshape(x, &[n])?;
        self.reduce_mean(flat, 0)
    }

    // ---- reverse sweep --------------------------------------------------

    /// Accumulates `∂root/∂v` into the gradient slot of every node that
    /// requires a gradient. Repeated calls add up.
    pub fn backward(&self, root: Var) -> Result<()> {
        let pass = {
            let nodes = self.nodes.borrow();
            let root_shape = nodes[root.0].value.shape();
            if root_shape.numel() != 1 {
                return Err(Error::NonScalarRoot(root_shape.clone()));
            }
            let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
            grads[root.0] = Some(vec![1.0]);
            let mut pass: Vec<(usize, Vec<f64>)> = Vec::new();
            for i in (0..=root.0).rev() {
                let Some(g) = grads[i].take() else { continue };
                let node = &nodes[i];
                if !node.requires_grad {
                    continue;
                }
                propagate(&nodes, node, &g, &mut grads);
                pass.push((i, g));
            }
            pass
        };
        let mut nodes = self.nodes.borrow_mut();
        for (i, g) in pass {
            match &mut nodes[i].grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn propagate(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Matmul(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let k = av.shape().last();
            let m = bv.dims()[1];
            let rows = av.numel() / k.max(1);
            if let Some(ga) = slot(grads, nodes, *a) {
                // dA = dC · Bᵀ
                kernels::gemm(rows, m, k, g, false, bv.data(), true, ga);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                // dB = Aᵀ · dC
                kernels::gemm(k, rows, m, av.data(), true, g, false, gb);
            }
        }
        Op::Binary(kind, a, b) => {
            let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            if let Some(ga) = slot(grads, nodes, *a) {
                match kind {
                    Binary::Add | Binary::Sub => add_into(ga, g),
                    Binary::Mul => {
                        for ((s, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                            *s += gi * y;
                        }
                    }
                    Binary::Div => {
                        for ((s, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                            *s += gi / y;
                        }
                    }
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                match kind {
                    Binary::Add => add_into(gb, g),
                    Binary::Sub => {
                        for (s, gi) in gb.iter_mut().zip(g) {
                            *s -= gi;
                        }
                    }
                    Binary::Mul => {
                        for ((s, gi), x) in gb.iter_mut().zip(g).zip(av) {
                            *s += gi * x;
                        }
                    }
                    Binary::Div => {
                        for ((s, gi), (x, y)) in gb.iter_mut().zip(g).zip(av.iter().zip(bv)) {
                            *s -= gi * x / (y * y);
                        }
                    }
                }
            }
        }
        Op::Scale(x, c) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                for (s, gi) in gx.iter_mut().zip(g) {
                    *s += c * gi;
                }
            }
        }
        Op::Offset(x) | Op::Reshape(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                add_into(gx, g);
            }
        }
        Op::Unary(kind, x) => {
            let xv = nodes[x.0].value.data();
            if let Some(gx) = slot(grads, nodes, *x) {
                kind.backprop(gx, g, xv, out.data());
            }
        }
        Op::Expand { src, axis, len } => {
            let sdims = nodes[src.0].value.dims();
            let outer: usize = sdims[..*axis].iter().product();
            let inner: usize = sdims[*axis..].iter().product();
            if let Some(gx) = slot(grads, nodes, *src) {
                for o in 0..outer {
                    let acc = &mut gx[o * inner..(o + 1) * inner];
                    for j in 0..*len {
                        let blk = &g[(o * len + j) * inner..(o * len + j + 1) * inner];
                        add_into(acc, blk);
                    }
                }
            }
        }
        Op::Concat { parts, axis } => {
            let (outer, _, inner) = out.shape().split_at_axis(*axis);
            let total = out.dims()[*axis];
            let mut offset = 0;
            for p in parts {
                let plen = nodes[p.0].value.dims()[*axis];
                if let Some(gp) = slot(grads, nodes, *p) {
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + plen) * inner];
                        add_into(&mut gp[o * plen * inner..(o + 1) * plen * inner], src);
                    }
                }
                offset += plen;
            }
        }
        Op::Slice { src, axis, start } => {
            let sshape = nodes[src.0].value.shape().clone();
            let (outer, len, inner) = sshape.split_at_axis(*axis);
            let width = out.dims()[*axis];
            if let Some(gx) = slot(grads, nodes, *src) {
                for o in 0..outer {
                    let dst = &mut gx[(o * len + start) * inner..(o * len + start + width) * inner];
                    add_into(dst, &g[o * width * inner..(o + 1) * width * inner]);
                }
            }
        }
        Op::Sum { src, axis } | Op::Mean { src, axis } => {
            let sshape = nodes[src.0].value.shape().clone();
            let (outer, len, inner) = sshape.split_at_axis(*axis);
            let c = if matches!(node.op, Op::Mean { .. }) {
                1.0 / len as f64
            } else {
                1.0
            };
            if let Some(gx) = slot(grads, nodes, *src) {
                for o in 0..outer {
                    let gi = &g[o * inner..(o + 1) * inner];
                    for j in 0..len {
                        let dst = &mut gx[(o * len + j) * inner..(o * len + j + 1) * inner];
                        for (d, v) in dst.iter_mut().zip(gi) {
                            *d += c * v;
                        }
                    }
                }
            }
        }
        Op::Select { src, axis, picks, .. } => {
            let sshape = nodes[src.0].value.shape().clone();
            let (outer, len, inner) = sshape.split_at_axis(*axis);
            if let Some(gx) = slot(grads, nodes, *src) {
                for o in 0..outer {
                    for i in 0..inner {
                        let r = o * inner + i;
                        gx[(o * len + picks[r]) * inner + i] += g[r];
                    }
                }
            }
        }
        Op::LogSumExp { src, axis, weights } => {
            let (outer, len, inner) = nodes[src.0].value.shape().split_at_axis(*axis);
            if let Some(gx) = slot(grads, nodes, *src) {
                for o in 0..outer {
                    let go = &g[o * inner..(o + 1) * inner];
                    for j in 0..len {
                        let at = (o * len + j) * inner;
                        let dst = &mut gx[at..at + inner];
                        for ((d, w), gi) in dst.iter_mut().zip(&weights[at..at + inner]).zip(go) {
                            *d += gi * w;
                        }
                    }
                }
            }
        }
        Op::AddRow(x, b) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                add_into(gx, g);
            }
            let m = nodes[b.0].value.numel().max(1);
            if let Some(gb) = slot(grads, nodes, *b) {
                for row in g.chunks(m) {
                    add_into(gb, row);
                }
            }
        }
        Op::RowDot(e, q) => {
            let (ev, qv) = (&nodes[e.0].value, &nodes[q.0].value);
            let k = ev.shape().last().max(1);
            let n = out.numel() / (qv.numel() / k).max(1);
            if let Some(ge) = slot(grads, nodes, *e) {
                for (r, (dst, gi)) in ge.chunks_mut(k).zip(g).enumerate() {
                    let qo = &qv.data()[(r / n) * k..(r / n + 1) * k];
                    for (d, qi) in dst.iter_mut().zip(qo) {
                        *d += gi * qi;
                    }
                }
            }
            if let Some(gq) = slot(grads, nodes, *q) {
                for (r, (row, gi)) in ev.data().chunks(k).zip(g).enumerate() {
                    let dst = &mut gq[(r / n) * k..(r / n + 1) * k];
                    for (d, v) in dst.iter_mut().zip(row) {
                        *d += gi * v;
                    }
                }
            }
        }
        Op::ScaleRows(e, w) => {
            let (ev, wv) = (&nodes[e.0].value, &nodes[w.0].value);
            let k = ev.shape().last().max(1);
            if let Some(ge) = slot(grads, nodes, *e) {
                for ((dst, gr), &c) in ge.chunks_mut(k).zip(g.chunks(k)).zip(wv.data()) {
                    for (d, gi) in dst.iter_mut().zip(gr) {
                        *d += c * gi;
                    }
                }
            }
            if let Some(gw) = slot(grads, nodes, *w) {
                for ((d, gr), row) in gw.iter_mut().zip(g.chunks(k)).zip(ev.data().chunks(k)) {
                    *d += gr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        Op::Softmax { src, axis } => {
            let (outer, len, inner) = out.shape().split_at_axis(*axis);
            let y = out.data();
            if let Some(gx) = slot(grads, nodes, *src) {
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..len {
                            gx[idx(j)] += y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
            }
        }
    }
}

/// `(outer, n, k)` for an `[.., n, k]` value paired with `other`, whose
/// shape must equal the leading dims with `drop` trailing axes removed
/// (`drop = 0`: `[.., k]`; `drop = 1`: `[.., n]`).
fn row_layout(op: &'static str, e: &Tensor, other: &Tensor, drop: usize) -> Result<(usize, usize, usize)> {
    let dims = e.dims();
    let r = dims.len();
    let expected: Vec<usize> = if r < 2 {
        Vec::new()
    } else if drop == 0 {
        dims[..r - 2].iter().chain(&dims[r - 1..]).copied().collect()
    } else {
        dims[..r - 1].to_vec()
    };
    if r < 2 || other.dims() != &expected[..] {
        return Err(Error::ShapeMismatch {
            op,
            lhs: e.shape().clone(),
            rhs: other.shape().clone(),
        });
    }
    Ok((dims[..r - 2].iter().product(), dims[r - 2], dims[r - 1]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
