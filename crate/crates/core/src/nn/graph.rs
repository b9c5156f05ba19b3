//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Building a node evaluates it immediately. The recorded graph can then be
//! re-evaluated with new leaf values via [`Graph::forward`], which is what the
//! finite-difference checker relies on.

use std::collections::BTreeMap;

use thiserror::Error;

use super::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {node} ({op}): shape mismatch: {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },
    #[error("node {node} ({op}) produced a non-finite value")]
    NonFinite { node: usize, op: &'static str },
    #[error("unknown binding `{0}`")]
    UnknownBinding(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("duplicate leaf name `{0}`")]
    DuplicateLeaf(String),
    #[error("loss node {node} is not scalar (shape {shape:?})")]
    NonScalarLoss { node: usize, shape: Vec<usize> },
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone)]
enum Op<T> {
    Param,
    Input,
    Constant,
    MatMul(NodeId, NodeId),
    BlockMatMul {
        a: NodeId,
        b: NodeId,
        groups: usize,
        trans_b: bool,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, T),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Gelu(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: T,
    },
    ConcatLast(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Mean {
        x: NodeId,
        axis: usize,
    },
    SliceLast {
        x: NodeId,
        start: usize,
        len: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
        len: usize,
    },
    Transpose(NodeId),
    Reshape(NodeId, Vec<usize>),
    Sum(NodeId),
    GatherRows(NodeId, Vec<usize>),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Input => "input",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::BlockMatMul { .. } => "block_matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Gelu(_) => "gelu",
            Op::Softmax(_) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::ConcatLast(_) => "concat",
            Op::ConcatRows(_) => "concat_rows",
            Op::Mean { .. } => "mean",
            Op::SliceLast { .. } => "slice_last",
            Op::SliceRows { .. } => "slice_rows",
            Op::Transpose(_) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::Sum(_) => "sum",
            Op::GatherRows(..) => "gather_rows",
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Param | Op::Input | Op::Constant)
    }
}

/// Gradients of a scalar loss with respect to every named leaf.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: BTreeMap<String, Tensor<T>>,
    pub inputs: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }
}

/// Name → node lookup for a parameter set bound into a graph.
#[derive(Debug, Clone, Default)]
pub struct ParamNodes(BTreeMap<String, NodeId>);

impl ParamNodes {
    pub fn get(&self, name: &str) -> Result<NodeId, GraphError> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::MissingParam(name.to_string()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    ops: Vec<Op<T>>,
    values: Vec<Tensor<T>>,
    leaves: BTreeMap<String, NodeId>,
}

// gelu, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let k = T::of(GELU_SQRT_2_OVER_PI);
    let c = T::of(GELU_CUBIC);
    let half = T::of(0.5);
    half * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::of(GELU_SQRT_2_OVER_PI);
    let c = T::of(GELU_CUBIC);
    let half = T::of(0.5);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0) * c * x * x)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Splits a shape into (rows, last) treating everything but the trailing
/// axis as rows.
fn rows_last(shape: &[usize]) -> (usize, usize) {
    match shape.split_last() {
        Some((&last, lead)) => (lead.iter().product(), last),
        None => (1, 1),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            leaves: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id.0]
    }

    /// Names of all parameter leaves, sorted.
    pub fn param_names(&self) -> Vec<String> {
        self.leaves
            .iter()
            .filter(|(_, id)| matches!(self.ops[id.0], Op::Param))
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn leaf(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    fn push_leaf(&mut self, op: Op<T>, name: &str, value: Tensor<T>) -> Result<NodeId, GraphError> {
        if self.leaves.contains_key(name) {
            return Err(GraphError::DuplicateLeaf(name.to_string()));
        }
        let id = NodeId(self.ops.len());
        self.ops.push(op);
        self.values.push(value);
        self.leaves.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn param(&mut self, name: &str, value: Tensor<T>) -> Result<NodeId, GraphError> {
        self.push_leaf(Op::Param, name, value)
    }

    pub fn input(&mut self, name: &str, value: Tensor<T>) -> Result<NodeId, GraphError> {
        self.push_leaf(Op::Input, name, value)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        let id = NodeId(self.ops.len());
        self.ops.push(Op::Constant);
        self.values.push(value);
        id
    }

    /// Binds every tensor of a parameter set as a named parameter leaf.
    pub fn bind_params<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a String, &'a Tensor<T>)>,
    ) -> Result<ParamNodes, GraphError> {
        let mut nodes = BTreeMap::new();
        for (name, t) in params {
            let id = self.param(name, t.clone())?;
            nodes.insert(name.clone(), id);
        }
        Ok(ParamNodes(nodes))
    }

    fn push(&mut self, op: Op<T>) -> Result<NodeId, GraphError> {
        let node = self.ops.len();
        let value = self.eval(node, &op)?;
        self.ops.push(op);
        self.values.push(value);
        Ok(NodeId(node))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::MatMul(a, b))
    }
    /// `groups` independent products of stacked row blocks: block `g` of
    /// the result is `A_g B_g`, or `A_g B_gᵀ` with `trans_b`.
    pub fn block_matmul(&mut self, a: NodeId, b: NodeId, groups: usize, trans_b: bool) -> Result<NodeId, GraphError> {
        self.push(Op::BlockMatMul { a, b, groups, trans_b })
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Mul(a, b))
    }
    /// Adds a vector to every row (trailing axis) of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::AddBias(a, bias))
    }
    pub fn scale(&mut self, a: NodeId, factor: T) -> Result<NodeId, GraphError> {
        self.push(Op::Scale(a, factor))
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Tanh(a))
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Sigmoid(a))
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Relu(a))
    }
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Gelu(a))
    }
    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Softmax(a))
    }
    /// Layer normalization over the trailing axis with learned scale and shift.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: T) -> Result<NodeId, GraphError> {
        self.push(Op::LayerNorm { x, gamma, beta, eps })
    }
    /// Concatenation along the trailing axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        self.push(Op::ConcatLast(parts.to_vec()))
    }
    /// Concatenation of rank-2 tensors along the first axis.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        self.push(Op::ConcatRows(parts.to_vec()))
    }
    /// Mean over `axis`, which is removed from the shape.
    pub fn mean(&mut self, x: NodeId, axis: usize) -> Result<NodeId, GraphError> {
        self.push(Op::Mean { x, axis })
    }
    pub fn slice_last(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, GraphError> {
        self.push(Op::SliceLast { x, start, len })
    }
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, GraphError> {
        self.push(Op::SliceRows { x, start, len })
    }
    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Transpose(x))
    }
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, GraphError> {
        self.push(Op::Reshape(x, shape.to_vec()))
    }
    /// Rows of a rank-2 tensor picked by index (repeats allowed).
    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId, GraphError> {
        self.push(Op::GatherRows(x, rows.to_vec()))
    }
    /// Sum of all entries, as a rank-0 tensor.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.push(Op::Sum(x))
    }

    /// Replaces the named leaves and re-evaluates every derived node.
    pub fn forward(&mut self, bindings: &[(&str, Tensor<T>)]) -> Result<(), GraphError> {
        for (name, t) in bindings {
            let id = self
                .leaves
                .get(*name)
                .copied()
                .ok_or_else(|| GraphError::UnknownBinding(name.to_string()))?;
            if self.values[id.0].shape() != t.shape() {
                return Err(GraphError::Shape {
                    node: id.0,
                    op: self.ops[id.0].name(),
                    detail: format!(
                        "binding `{name}` has shape {:?}, expected {:?}",
                        t.shape(),
                        self.values[id.0].shape()
                    ),
                });
            }
            self.values[id.0] = t.clone();
        }
        for node in 0..self.ops.len() {
            if self.ops[node].is_leaf() {
                continue;
            }
            let op = self.ops[node].clone();
            self.values[node] = self.eval(node, &op)?;
        }
        Ok(())
    }

    fn eval(&self, node: usize, op: &Op<T>) -> Result<Tensor<T>, GraphError> {
        let name = op.name();
        let err = |detail: String| GraphError::Shape { node, op: name, detail };
        let v = |id: &NodeId| &self.values[id.0];
        let out = match op {
            Op::Param | Op::Input | Op::Constant => unreachable!("leaves are not evaluated"),
            Op::MatMul(a, b) => v(a)
                .matmul(v(b))
                .ok_or_else(|| err(format!("{:?} x {:?}", v(a).shape(), v(b).shape())))?,
            Op::BlockMatMul { a, b, groups, trans_b } => v(a)
                .block_matmul(false, v(b), *trans_b, *groups)
                .ok_or_else(|| err(format!("{:?} x {:?} in {groups} groups", v(a).shape(), v(b).shape())))?,
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (v(a), v(b));
                if x.shape() != y.shape() {
                    return Err(err(format!("{:?} vs {:?}", x.shape(), y.shape())));
                }
                match op {
                    Op::Add(..) => x.zip_map(y, |p, q| p + q),
                    Op::Sub(..) => x.zip_map(y, |p, q| p - q),
                    _ => x.zip_map(y, |p, q| p * q),
                }
            }
            Op::AddBias(a, b) => {
                let (x, bias) = (v(a), v(b));
                if bias.rank() != 1 || x.rank() == 0 || x.last_dim() != bias.len() {
                    return Err(err(format!("{:?} + bias {:?}", x.shape(), bias.shape())));
                }
                let n = bias.len();
                let mut out = x.clone();
                for (i, o) in out.data_mut().iter_mut().enumerate() {
                    *o = *o + bias.data()[i % n];
                }
                out
            }
            Op::Scale(a, f) => v(a).map(|p| p * *f),
            Op::Tanh(a) => v(a).map(|p| p.tanh()),
            Op::Sigmoid(a) => v(a).map(sigmoid),
            Op::Relu(a) => v(a).map(|p| if p > T::zero() { p } else { T::zero() }),
            Op::Gelu(a) => v(a).map(gelu),
            Op::Softmax(a) => {
                let x = v(a);
                let (rows, n) = rows_last(x.shape());
                let mut out = x.clone();
                for r in 0..rows {
                    let row = &mut out.data_mut()[r * n..(r + 1) * n];
                    let m = row.iter().fold(T::neg_infinity(), |m, &p| m.max(p));
                    let mut z = T::zero();
                    for p in row.iter_mut() {
                        *p = (*p - m).exp();
                        z = z + *p;
                    }
                    for p in row.iter_mut() {
                        *p = *p / z;
                    }
                }
                out
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let (x, g, b) = (v(x), v(gamma), v(beta));
                let (rows, n) = rows_last(x.shape());
                if x.rank() == 0 || g.shape() != [n] || b.shape() != [n] {
                    return Err(err(format!(
                        "x {:?}, gamma {:?}, beta {:?}",
                        x.shape(),
                        g.shape(),
                        b.shape()
                    )));
                }
                let mut out = x.clone();
                for r in 0..rows {
                    let row = &mut out.data_mut()[r * n..(r + 1) * n];
                    let (mu, rstd) = row_moments(row, *eps);
                    for (j, p) in row.iter_mut().enumerate() {
                        *p = (*p - mu) * rstd * g.data()[j] + b.data()[j];
                    }
                }
                out
            }
            Op::ConcatLast(parts) => {
                let first = parts.first().ok_or_else(|| err("no inputs".into()))?;
                let lead = v(first).shape()[..v(first).rank().saturating_sub(1)].to_vec();
                let (rows, _) = rows_last(v(first).shape());
                let mut widths = Vec::with_capacity(parts.len());
                for p in parts {
                    let s = v(p).shape();
                    if s.is_empty() || s[..s.len() - 1] != lead[..] {
                        return Err(err(format!("part shape {:?} vs leading {:?}", s, lead)));
                    }
                    widths.push(s[s.len() - 1]);
                }
                let total: usize = widths.iter().sum();
                let mut data = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for (p, &w) in parts.iter().zip(&widths) {
                        data.extend_from_slice(&v(p).data()[r * w..(r + 1) * w]);
                    }
                }
                let mut shape = lead;
                shape.push(total);
                Tensor::new(shape, data)
            }
            Op::ConcatRows(parts) => {
                let first = parts.first().ok_or_else(|| err("no inputs".into()))?;
                let (_, cols) = v(first)
                    .dims2()
                    .ok_or_else(|| err(format!("rank-2 expected, got {:?}", v(first).shape())))?;
                let mut rows = 0;
                let mut data = Vec::new();
                for p in parts {
                    match v(p).dims2() {
                        Some((r, c)) if c == cols => {
                            rows += r;
                            data.extend_from_slice(v(p).data());
                        }
                        _ => return Err(err(format!("part shape {:?}, cols {cols}", v(p).shape()))),
                    }
                }
                Tensor::new(vec![rows, cols], data)
            }
            Op::Mean { x, axis } => {
                let x = v(x);
                if *axis >= x.rank() {
                    return Err(err(format!("axis {axis} out of range for {:?}", x.shape())));
                }
                let (outer, len, inner) = axis_split(x.shape(), *axis);
                let inv = T::one() / T::of(len as f64);
                let mut data = vec![T::zero(); outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            let d = &mut data[o * inner + i];
                            *d = *d + x.data()[(o * len + l) * inner + i];
                        }
                    }
                }
                for d in &mut data {
                    *d = *d * inv;
                }
                let mut shape = x.shape().to_vec();
                shape.remove(*axis);
                Tensor::new(shape, data)
            }
            Op::SliceLast { x, start, len } => {
                let x = v(x);
                let (rows, n) = rows_last(x.shape());
                if x.rank() == 0 || start + len > n || *len == 0 {
                    return Err(err(format!("[{start}, {}) of {:?}", start + len, x.shape())));
                }
                let mut data = Vec::with_capacity(rows * len);
                for r in 0..rows {
                    data.extend_from_slice(&x.data()[r * n + start..r * n + start + len]);
                }
                let mut shape = x.shape().to_vec();
                *shape.last_mut().unwrap() = *len;
                Tensor::new(shape, data)
            }
            Op::SliceRows { x, start, len } => {
                let x = v(x);
                if x.rank() == 0 || start + len > x.shape()[0] || *len == 0 {
                    return Err(err(format!("rows [{start}, {}) of {:?}", start + len, x.shape())));
                }
                let inner: usize = x.shape()[1..].iter().product();
                let mut shape = x.shape().to_vec();
                shape[0] = *len;
                Tensor::new(shape, x.data()[start * inner..(start + len) * inner].to_vec())
            }
            Op::Transpose(x) => v(x)
                .transpose()
                .ok_or_else(|| err(format!("rank-2 expected, got {:?}", v(x).shape())))?,
            Op::Reshape(x, shape) => v(x)
                .clone()
                .reshaped(shape.clone())
                .ok_or_else(|| err(format!("{:?} -> {:?}", v(x).shape(), shape)))?,
            Op::Sum(x) => Tensor::scalar(v(x).sum()),
            Op::GatherRows(x, rows) => {
                let x = v(x);
                let (n, cols) = x
                    .dims2()
                    .ok_or_else(|| err(format!("rank-2 expected, got {:?}", x.shape())))?;
                if rows.is_empty() || rows.iter().any(|&r| r >= n) {
                    return Err(err(format!("row indices {rows:?} out of range for {n} rows")));
                }
                let mut data = Vec::with_capacity(rows.len() * cols);
                for &r in rows {
                    data.extend_from_slice(&x.data()[r * cols..(r + 1) * cols]);
                }
                Tensor::new(vec![rows.len(), cols], data)
            }
        };
        if !out.is_finite() {
            return Err(GraphError::NonFinite { node, op: name });
        }
        Ok(out)
    }

    /// Reverse-mode gradients of the scalar node `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, GraphError> {
        let lv = &self.values[loss.0];
        if lv.len() != 1 {
            return Err(GraphError::NonScalarLoss {
                node: loss.0,
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.ops.len()];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for node in (0..=loss.0).rev() {
            let Some(g) = grads[node].take() else { continue };
            let op = &self.ops[node];
            if op.is_leaf() {
                grads[node] = Some(g);
                continue;
            }
            for (target, contrib) in self.local_grads(node, op, &g) {
                match &mut grads[target.0] {
                    Some(acc) => acc.accumulate(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        let mut params = BTreeMap::new();
        let mut inputs = BTreeMap::new();
        for (name, id) in &self.leaves {
            let g = grads[id.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(self.values[id.0].shape()));
            match self.ops[id.0] {
                Op::Param => {
                    params.insert(name.clone(), g);
                }
                Op::Input => {
                    inputs.insert(name.clone(), g);
                }
                _ => {}
            }
        }
        Ok(Gradients { params, inputs })
    }

    /// Vector-Jacobian products of one node with respect to its inputs.
    fn local_grads(&self, node: usize, op: &Op<T>, g: &Tensor<T>) -> Vec<(NodeId, Tensor<T>)> {
        let v = |id: &NodeId| &self.values[id.0];
        let out = &self.values[node];
        match op {
            Op::Param | Op::Input | Op::Constant => Vec::new(),
            Op::MatMul(a, b) => {
                let ga = g.matmul(&v(b).transpose().unwrap()).unwrap();
                let gb = v(a).transpose().unwrap().matmul(g).unwrap();
                vec![(*a, ga), (*b, gb)]
            }
            Op::BlockMatMul { a, b, groups, trans_b } => {
                let (av, bv) = (v(a), v(b));
                let ga = g.block_matmul(false, bv, !*trans_b, *groups).unwrap();
                let gb = if *trans_b {
                    g.block_matmul(true, av, false, *groups).unwrap()
                } else {
                    av.block_matmul(true, g, false, *groups).unwrap()
                };
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|p| -p))],
            Op::Mul(a, b) => vec![(*a, g.zip_map(v(b), |p, q| p * q)), (*b, g.zip_map(v(a), |p, q| p * q))],
            Op::AddBias(a, b) => {
                let n = v(b).len();
                let mut gb = Tensor::zeros(&[n]);
                for (i, &p) in g.data().iter().enumerate() {
                    gb.data_mut()[i % n] = gb.data()[i % n] + p;
                }
                vec![(*a, g.clone()), (*b, gb)]
            }
            Op::Scale(a, f) => vec![(*a, g.map(|p| p * *f))],
            Op::Tanh(a) => vec![(*a, g.zip_map(out, |p, y| p * (T::one() - y * y)))],
            Op::Sigmoid(a) => vec![(*a, g.zip_map(out, |p, y| p * y * (T::one() - y)))],
            Op::Relu(a) => vec![(*a, g.zip_map(v(a), |p, x| if x > T::zero() { p } else { T::zero() }))],
            Op::Gelu(a) => vec![(*a, g.zip_map(v(a), |p, x| p * gelu_grad(x)))],
            Op::Softmax(a) => {
                let (rows, n) = rows_last(out.shape());
                let mut gx = g.clone();
                for r in 0..rows {
                    let y = &out.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let dot: T = y.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for j in 0..n {
                        gx.data_mut()[r * n + j] = y[j] * (gr[j] - dot);
                    }
                }
                vec![(*a, gx)]
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let (xv, gm) = (v(x), v(gamma));
                let (rows, n) = rows_last(xv.shape());
                let nf = T::of(n as f64);
                let mut gx = Tensor::zeros(xv.shape());
                let mut gg = Tensor::zeros(&[n]);
                let mut gbeta = Tensor::zeros(&[n]);
                let mut xhat = vec![T::zero(); n];
                let mut dxhat = vec![T::zero(); n];
                for r in 0..rows {
                    let row = &xv.data()[r * n..(r + 1) * n];
                    let (mu, rstd) = row_moments(row, *eps);
                    let gr = &g.data()[r * n..(r + 1) * n];
                    for j in 0..n {
                        xhat[j] = (row[j] - mu) * rstd;
                        dxhat[j] = gr[j] * gm.data()[j];
                        gg.data_mut()[j] = gg.data()[j] + gr[j] * xhat[j];
                        gbeta.data_mut()[j] = gbeta.data()[j] + gr[j];
                    }
                    let m1: T = dxhat.iter().copied().sum::<T>() / nf;
                    let m2: T = dxhat.iter().zip(&xhat).map(|(&p, &q)| p * q).sum::<T>() / nf;
                    for j in 0..n {
                        gx.data_mut()[r * n + j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                vec![(*x, gx), (*gamma, gg), (*beta, gbeta)]
            }
            Op::ConcatLast(parts) => {
                let (rows, total) = rows_last(out.shape());
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let w = v(p).last_dim();
                        let mut data = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        (*p, Tensor::new(v(p).shape().to_vec(), data))
                    })
                    .collect()
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let n = v(p).len();
                        let t = Tensor::new(v(p).shape().to_vec(), g.data()[offset..offset + n].to_vec());
                        offset += n;
                        (*p, t)
                    })
                    .collect()
            }
            Op::Mean { x, axis } => {
                let xv = v(x);
                let (outer, len, inner) = axis_split(xv.shape(), *axis);
                let inv = T::one() / T::of(len as f64);
                let mut gx = Tensor::zeros(xv.shape());
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            gx.data_mut()[(o * len + l) * inner + i] = g.data()[o * inner + i] * inv;
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::SliceLast { x, start, len } => {
                let xv = v(x);
                let (rows, n) = rows_last(xv.shape());
                let mut gx = Tensor::zeros(xv.shape());
                for r in 0..rows {
                    gx.data_mut()[r * n + start..r * n + start + len]
                        .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                }
                vec![(*x, gx)]
            }
            Op::SliceRows { x, start, len } => {
                let xv = v(x);
                let inner: usize = xv.shape()[1..].iter().product();
                let mut gx = Tensor::zeros(xv.shape());
                gx.data_mut()[start * inner..(start + len) * inner].copy_from_slice(g.data());
                vec![(*x, gx)]
            }
            Op::Transpose(x) => vec![(*x, g.transpose().unwrap())],
            Op::Reshape(x, _) => vec![(*x, g.clone().reshaped(v(x).shape().to_vec()).unwrap())],
            Op::Sum(x) => vec![(*x, Tensor::full(v(x).shape(), g.data()[0]))],
            Op::GatherRows(x, rows) => {
                let xv = v(x);
                let cols = xv.last_dim();
                let mut gx = Tensor::zeros(xv.shape());
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..cols {
                        let d = &mut gx.data_mut()[r * cols + j];
                        *d = *d + g.data()[k * cols + j];
                    }
                }
                vec![(*x, gx)]
            }
        }
    }

    /// Inputs of every relu node, in node order. Used to detect kinks during
    /// finite-difference probes.
    pub(crate) fn relu_inputs(&self) -> Vec<&Tensor<T>> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Relu(a) => Some(&self.values[a.0]),
                _ => None,
            })
            .collect()
    }
}

fn row_moments<T: Scalar>(row: &[T], eps: T) -> (T, T) {
    let n = T::of(row.len() as f64);
    let mu = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&p| (p - mu) * (p - mu)).sum::<T>() / n;
    (mu, T::one() / (var + eps).sqrt())
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn matmul_with_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let a = g.input("a", random(&mut rng, &[3, 3])).unwrap();
        let i = g.constant(Tensor::eye(3));
        let p = g.matmul(a, i).unwrap();
        assert_eq!(g.value(p), g.value(a));
    }

    #[test]
    fn block_matmul_gradients() {
        for trans_b in [false, true] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut g = Graph::new();
            let a = g.param("a", random(&mut rng, &[6, 4])).unwrap();
            let b_shape = if trans_b { [9, 4] } else { [12, 2] };
            let b = g.param("b", random(&mut rng, &b_shape)).unwrap();
            let y = g.block_matmul(a, b, 3, trans_b).unwrap();
            let w = g.constant(random(&mut rng, g.value(y).shape()));
            let y = g.mul(y, w).unwrap();
            let loss = g.sum(y).unwrap();
            let report = crate::nn::gradcheck::gradient_check(&mut g, loss, 1e-6, 0).unwrap();
            assert!(report.max_rel_err() < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Graph::new();
        let a = g.input("a", random(&mut rng, &[4, 7]).map(|v| v * 20.0)).unwrap();
        let s = g.softmax(a).unwrap();
        for r in 0..4 {
            let total: f64 = (0..7).map(|j| g.value(s).get2(r, j)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let x = g.input("x", random(&mut rng, &[5, 9]).map(|v| 3.0 * v + 2.0)).unwrap();
        let gamma = g.constant(Tensor::ones(&[9]));
        let beta = g.constant(Tensor::zeros(&[9]));
        let y = g.layer_norm(x, gamma, beta, 0.0).unwrap();
        for r in 0..5 {
            let row: Vec<f64> = (0..9).map(|j| g.value(y).get2(r, j)).collect();
            let mean = row.iter().sum::<f64>() / 9.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-10, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-10, "var {var}");
        }
    }

    #[test]
    fn linear_sum_gradient_is_outer_product() {
        // loss = sum(W x) for W: [3, 4], x: [4, 1]
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, &[4, 1]);
        let mut g = Graph::new();
        let w = g.param("w", random(&mut rng, &[3, 4])).unwrap();
        let xi = g.input("x", x.clone()).unwrap();
        let y = g.matmul(w, xi).unwrap();
        let loss = g.sum(y).unwrap();
        let grads = g.backward(loss).unwrap();
        let gw = grads.param("w").unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(gw.get2(i, j), x.data()[j]);
            }
        }
    }

    #[test]
    fn softmax_cross_entropy_at_uniform_logits() {
        // loss = -log softmax(z)[target]; gradient is p - onehot with p uniform
        let k = 5;
        let target = 2;
        let mut g = Graph::new();
        let z = g.param("z", Tensor::new(vec![1, k], vec![0.3; k])).unwrap();
        let p = g.softmax(z).unwrap();
        let picked = g.slice_last(p, target, 1).unwrap();
        // At uniform logits p_t = 1/k, so d(-log p_t) = -k dp_t.
        let loss = g.scale(picked, -(k as f64)).unwrap();
        let loss = g.sum(loss).unwrap();
        let grads = g.backward(loss).unwrap();
        let gz = grads.param("z").unwrap();
        for j in 0..k {
            let expected = 1.0 / k as f64 - if j == target { 1.0 } else { 0.0 };
            assert!((gz.data()[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn unreached_params_get_zero_gradients() {
        let mut g = Graph::new();
        let a = g.param("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let _b = g.param("b", Tensor::vector(vec![3.0])).unwrap();
        let s = g.sum(a).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.param("b").unwrap().data(), &[0.0]);
        assert_eq!(grads.param("a").unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let a = g.param("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(a), Err(GraphError::NonScalarLoss { .. })));
    }

    #[test]
    fn shape_errors_name_the_node() {
        let mut g = Graph::<f64>::new();
        let a = g.input("a", Tensor::zeros(&[2, 3])).unwrap();
        let b = g.input("b", Tensor::zeros(&[2, 3])).unwrap();
        match g.matmul(a, b) {
            Err(GraphError::Shape { node, op, .. }) => {
                assert_eq!(node, 2);
                assert_eq!(op, "matmul");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forward_rebinding_recomputes() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = g.tanh(x).unwrap();
        let s = g.sum(y).unwrap();
        g.forward(&[("x", Tensor::vector(vec![0.0, 0.0]))]).unwrap();
        assert_eq!(g.value(s).item(), Some(0.0));
        assert!(matches!(
            g.forward(&[("x", Tensor::vector(vec![0.0]))]),
            Err(GraphError::Shape { .. })
        ));
        assert!(matches!(
            g.forward(&[("nope", Tensor::vector(vec![0.0]))]),
            Err(GraphError::UnknownBinding(_))
        ));
    }

    #[test]
    fn kernel_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[3, 4]);
        let x = random(&mut rng, &[4, 2]);
        let y = random(&mut rng, &[4, 2]);
        let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let eval = |input: &Tensor<f64>| {
            let mut g = Graph::new();
            let wi = g.constant(w.clone());
            let bi = g.constant(b.clone());
            let xi = g.input("x", input.clone()).unwrap();
            let m1 = g.matmul(wi, xi).unwrap();
            let m2 = g.matmul(bi, xi).unwrap();
            let s = g.add(m1, m2).unwrap();
            g.value(s).clone()
        };
        let combo = x.zip_map(&y, |p, q| alpha * p + beta * q);
        let lhs = eval(&combo);
        let rhs = eval(&x).zip_map(&eval(&y), |p, q| alpha * p + beta * q);
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0f64), 0.0);
        // tanh-approximate gelu(1) = 0.8411919906082768
        assert!((gelu(1.0f64) - 0.841_191_990_608_276_8).abs() < 1e-15);
    }
}
