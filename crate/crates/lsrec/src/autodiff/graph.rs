//! Define-by-run reverse-mode differentiation on a tape of tensor ops.
//!
//! Every constructor computes its value eagerly and records the op on the
//! tape; [`Graph::backward`] walks the tape in reverse from a scalar root.
//! All accumulation happens in construction order on a single thread, so
//! two runs over the same graph produce bit-identical gradients.

use super::tensor::{GraphError, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AffineConst { x: NodeId, mul: f64 },
    MatMul(NodeId, NodeId),
    Concat(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    HStack(Vec<NodeId>),
    Slice { x: NodeId, start: usize, len: usize },
    Row { x: NodeId, index: usize },
    Rows { x: NodeId, indices: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
    MeanRows(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Log(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Softmax(NodeId),
    Dot(NodeId, NodeId),
    SumSq(NodeId),
    Euclid(NodeId, NodeId),
    AddRow { m: NodeId, v: NodeId },
    MulRow { m: NodeId, v: NodeId },
    InvSqrtShift { x: NodeId, eps: f64 },
    Reshape { x: NodeId },
}

struct Node {
    op: Op,
    value: Tensor,
    trainable: bool,
}

/// Per-node gradients produced by a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. this node, if any path reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of the root w.r.t. this node, zeros if unreached.
    pub fn grad_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

/// The tape. Ops append nodes; values are available immediately.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, trainable: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-trainable leaf: data fed into the graph.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    /// Trainable leaf: receives an exact-zero gradient when no path from
    /// the root reaches it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.input(Tensor::scalar(v))
    }

    fn binary_shape(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> Result<Vec<usize>, GraphError> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa == sb {
            Ok(sa.to_vec())
        } else if sa.is_empty() {
            Ok(sb.to_vec())
        } else if sb.is_empty() {
            Ok(sa.to_vec())
        } else {
            Err(GraphError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    fn binary_apply(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, GraphError> {
        let shape = self.binary_shape(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b);
        let n: usize = if shape.is_empty() {
            1
        } else {
            shape.iter().product()
        };
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let x = if ta.is_scalar() { ta.item() } else { ta.data()[i] };
            let y = if tb.is_scalar() { tb.item() } else { tb.data()[i] };
            data.push(f(x, y));
        }
        let value = Tensor { shape, data };
        Ok(self.push(op, value, false))
    }

    /// Elementwise sum; one side may be a scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary_apply("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// Elementwise difference; one side may be a scalar.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary_apply("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; one side may be a scalar.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary_apply("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `mul * x + add` with compile-time constants.
    pub fn affine_const(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| mul * v + add).collect(),
        };
        self.push(Op::AffineConst { x, mul }, value, false)
    }

    /// Matrix product. Accepts `[m,k]x[k,n]`, `[k]x[k,n]` and `[m,k]x[k]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let ta = self.value(a);
        let tb = self.value(b);
        let (m, k1) = match ta.rank() {
            2 => (ta.rows(), ta.cols()),
            1 => (1, ta.shape()[0]),
            _ => {
                return Err(GraphError::BadRank {
                    op: "matmul",
                    expected: 2,
                    shape: ta.shape().to_vec(),
                })
            }
        };
        let (k2, n) = match tb.rank() {
            2 => (tb.rows(), tb.cols()),
            1 => (tb.shape()[0], 1),
            _ => {
                return Err(GraphError::BadRank {
                    op: "matmul",
                    expected: 2,
                    shape: tb.shape().to_vec(),
                })
            }
        };
        if k1 != k2 {
            return Err(GraphError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let k = k1;
        let mut out = vec![0.0; m * n];
        let da = ta.data();
        let db = tb.data();
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let row = &db[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    dst[j] += av * row[j];
                }
            }
        }
        let shape = match (ta.rank(), tb.rank()) {
            (2, 2) => vec![m, n],
            (1, 2) => vec![n],
            (2, 1) => vec![m],
            _ => unreachable!(),
        };
        let value = Tensor { shape, data: out };
        Ok(self.push(Op::MatMul(a, b), value, false))
    }

    /// Concatenate rank-0 and rank-1 parts into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        if parts.is_empty() {
            return Err(GraphError::EmptyInput { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(GraphError::BadRank {
                    op: "concat",
                    expected: 1,
                    shape: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::vector(data);
        Ok(self.push(Op::Concat(parts.to_vec()), value, false))
    }

    /// Stack equal-length vectors as matrix rows.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId, GraphError> {
        if rows.is_empty() {
            return Err(GraphError::EmptyInput { op: "stack_rows" });
        }
        let cols = {
            let first = self.value(rows[0]);
            if first.rank() != 1 {
                return Err(GraphError::BadRank {
                    op: "stack_rows",
                    expected: 1,
                    shape: first.shape().to_vec(),
                });
            }
            first.shape()[0]
        };
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = self.value(r);
            if t.shape() != [cols] {
                return Err(GraphError::ShapeMismatch {
                    op: "stack_rows",
                    lhs: vec![cols],
                    rhs: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows.len(), cols, data);
        Ok(self.push(Op::StackRows(rows.to_vec()), value, false))
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn hstack(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        if parts.is_empty() {
            return Err(GraphError::EmptyInput { op: "hstack" });
        }
        let rows = {
            let first = self.value(parts[0]);
            if first.rank() != 2 {
                return Err(GraphError::BadRank {
                    op: "hstack",
                    expected: 2,
                    shape: first.shape().to_vec(),
                });
            }
            first.rows()
        };
        let mut total_cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(GraphError::ShapeMismatch {
                    op: "hstack",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            total_cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total_cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::matrix(rows, total_cols, data);
        Ok(self.push(Op::HStack(parts.to_vec()), value, false))
    }

    /// Contiguous sub-range of a vector.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, GraphError> {
        let t = self.value(x);
        if t.rank() != 1 {
            return Err(GraphError::BadRank {
                op: "slice",
                expected: 1,
                shape: t.shape().to_vec(),
            });
        }
        if start + len > t.shape()[0] {
            return Err(GraphError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                len: t.shape()[0],
            });
        }
        let value = Tensor::vector(t.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice { x, start, len }, value, false))
    }

    /// One row of a matrix as a vector.
    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId, GraphError> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(GraphError::BadRank {
                op: "row",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        if index >= t.rows() {
            return Err(GraphError::IndexOutOfRange {
                op: "row",
                index,
                len: t.rows(),
            });
        }
        let value = Tensor::vector(t.row(index).to_vec());
        Ok(self.push(Op::Row { x, index }, value, false))
    }

    /// Gather rows by index. Duplicate indices are allowed; their
    /// gradients accumulate by scatter-add.
    pub fn rows(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId, GraphError> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(GraphError::BadRank {
                op: "rows",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        let cols = t.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= t.rows() {
                return Err(GraphError::IndexOutOfRange {
                    op: "rows",
                    index: i,
                    len: t.rows(),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(indices.len(), cols, data);
        Ok(self.push(
            Op::Rows {
                x,
                indices: indices.to_vec(),
            },
            value,
            false,
        ))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s), false)
    }

    /// Mean of a vector, as a scalar.
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let t = self.value(x);
        if t.rank() != 1 || t.numel() == 0 {
            return Err(GraphError::BadRank {
                op: "mean",
                expected: 1,
                shape: t.shape().to_vec(),
            });
        }
        let s: f64 = t.data().iter().sum::<f64>() / t.numel() as f64;
        Ok(self.push(Op::Mean(x), Tensor::scalar(s), false))
    }

    /// Column means of a matrix, as a vector.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let t = self.value(x);
        if t.rank() != 2 || t.rows() == 0 {
            return Err(GraphError::BadRank {
                op: "mean_rows",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (j, o) in out.iter_mut().enumerate() {
                *o += t.data()[i * n + j];
            }
        }
        for o in out.iter_mut() {
            *o /= m as f64;
        }
        Ok(self.push(Op::MeanRows(x), Tensor::vector(out), false))
    }

    fn unary(
        &mut self,
        x: NodeId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> NodeId {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| f(v)).collect(),
        };
        self.push(op, value, false)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, stable_sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(x, stable_softplus, Op::Softplus(x))
    }

    /// Natural log. Inputs must be positive; clamp first where needed.
    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::ln, Op::Log(x))
    }

    /// Clip into `[lo, hi]`. The gradient is 1 strictly inside the
    /// interval and 0 at or beyond either bound.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    /// `1 / sqrt(x + eps)` elementwise; `eps > 0` keeps it finite.
    pub fn inv_sqrt_shift(&mut self, x: NodeId, eps: f64) -> NodeId {
        self.unary(x, |v| 1.0 / (v + eps).sqrt(), Op::InvSqrtShift { x, eps })
    }

    /// Numerically stable softmax over a vector.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        let t = self.value(x);
        if t.rank() != 1 || t.numel() == 0 {
            return Err(GraphError::BadRank {
                op: "softmax",
                expected: 1,
                shape: t.shape().to_vec(),
            });
        }
        let max = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = t.data().iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let value = Tensor::vector(exps.iter().map(|e| e / z).collect());
        Ok(self.push(Op::Softmax(x), value, false))
    }

    /// Inner product of two equal-length vectors, as a scalar.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.rank() != 1 || tb.rank() != 1 || ta.shape() != tb.shape() {
            return Err(GraphError::ShapeMismatch {
                op: "dot",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s), false))
    }

    /// Sum of squared elements, as a scalar.
    pub fn sum_sq(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Op::SumSq(x), Tensor::scalar(s), false)
    }

    /// Euclidean distance between two equal-length vectors. At exactly
    /// zero distance the gradient is defined as zero for both inputs.
    pub fn euclid(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.rank() != 1 || tb.rank() != 1 || ta.shape() != tb.shape() {
            return Err(GraphError::ShapeMismatch {
                op: "euclid",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Op::Euclid(a, b), Tensor::scalar(s.sqrt()), false))
    }

    /// Add a vector to every row of a matrix.
    pub fn add_row(&mut self, m: NodeId, v: NodeId) -> Result<NodeId, GraphError> {
        let tm = self.value(m);
        let tv = self.value(v);
        if tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.shape()[0] {
            return Err(GraphError::ShapeMismatch {
                op: "add_row",
                lhs: tm.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let (rows, cols) = (tm.rows(), tm.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(tm.data()[i * cols + j] + tv.data()[j]);
            }
        }
        let value = Tensor::matrix(rows, cols, data);
        Ok(self.push(Op::AddRow { m, v }, value, false))
    }

    /// Multiply every row of a matrix by a vector, elementwise.
    pub fn mul_row(&mut self, m: NodeId, v: NodeId) -> Result<NodeId, GraphError> {
        let tm = self.value(m);
        let tv = self.value(v);
        if tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.shape()[0] {
            return Err(GraphError::ShapeMismatch {
                op: "mul_row",
                lhs: tm.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let (rows, cols) = (tm.rows(), tm.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(tm.data()[i * cols + j] * tv.data()[j]);
            }
        }
        let value = Tensor::matrix(rows, cols, data);
        Ok(self.push(Op::MulRow { m, v }, value, false))
    }

    /// Same data under a new shape with matching element count.
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, GraphError> {
        let t = self.value(x);
        let n: usize = if shape.is_empty() {
            1
        } else {
            shape.iter().product()
        };
        if n != t.numel() {
            return Err(GraphError::ShapeMismatch {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = t.reshaped(shape.to_vec());
        Ok(self.push(Op::Reshape { x }, value, false))
    }

    /// Reverse pass from a scalar root. Returns per-node gradients;
    /// nodes no path reached stay `None`.
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients, GraphError> {
        if !self.value(root).is_scalar() {
            return Err(GraphError::RootNotScalar {
                shape: self.value(root).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let keep = g.clone();
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(keep);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        let op = self.nodes[i].op.clone();
        let out = &self.nodes[i].value;
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum_broadcast(grads, a, g, 1.0);
                self.accum_broadcast(grads, b, g, 1.0);
            }
            Op::Sub(a, b) => {
                self.accum_broadcast(grads, a, g, 1.0);
                self.accum_broadcast(grads, b, g, -1.0);
            }
            Op::Mul(a, b) => {
                let ta = self.value(a);
                let tb = self.value(b);
                // d/da (a*b) = b, d/db = a; fold when one side is scalar.
                if ta.is_scalar() && !tb.is_scalar() {
                    let s: f64 = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
                    accum(grads, a, Tensor::scalar(s));
                    let d: Vec<f64> = g.data().iter().map(|x| x * ta.item()).collect();
                    accum(
                        grads,
                        b,
                        Tensor {
                            shape: tb.shape().to_vec(),
                            data: d,
                        },
                    );
                } else if tb.is_scalar() && !ta.is_scalar() {
                    let s: f64 = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                    accum(grads, b, Tensor::scalar(s));
                    let d: Vec<f64> = g.data().iter().map(|x| x * tb.item()).collect();
                    accum(
                        grads,
                        a,
                        Tensor {
                            shape: ta.shape().to_vec(),
                            data: d,
                        },
                    );
                } else {
                    let da: Vec<f64> = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    let db: Vec<f64> = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    accum(
                        grads,
                        a,
                        Tensor {
                            shape: ta.shape().to_vec(),
                            data: da,
                        },
                    );
                    accum(
                        grads,
                        b,
                        Tensor {
                            shape: tb.shape().to_vec(),
                            data: db,
                        },
                    );
                }
            }
            Op::AffineConst { x, mul } => {
                let d: Vec<f64> = g.data().iter().map(|v| v * mul).collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: g.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::MatMul(a, b) => self.backprop_matmul(a, b, g, grads),
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let t = self.value(p);
                    let n = t.numel();
                    let slice = g.data()[off..off + n].to_vec();
                    accum(
                        grads,
                        p,
                        Tensor {
                            shape: t.shape().to_vec(),
                            data: slice,
                        },
                    );
                    off += n;
                }
            }
            Op::StackRows(rows) => {
                let cols = out.cols();
                for (r, id) in rows.iter().enumerate() {
                    accum(
                        grads,
                        *id,
                        Tensor::vector(g.data()[r * cols..(r + 1) * cols].to_vec()),
                    );
                }
            }
            Op::HStack(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut off = 0;
                for p in parts {
                    let t = self.value(p);
                    let cols = t.cols();
                    let mut d = Vec::with_capacity(rows * cols);
                    for i in 0..rows {
                        d.extend_from_slice(&g.data()[i * total + off..i * total + off + cols]);
                    }
                    accum(grads, p, Tensor::matrix(rows, cols, d));
                    off += cols;
                }
            }
            Op::Slice { x, start, len } => {
                let t = self.value(x);
                let mut d = vec![0.0; t.numel()];
                d[start..start + len].copy_from_slice(g.data());
                accum(grads, x, Tensor::vector(d));
            }
            Op::Row { x, index } => {
                let t = self.value(x);
                let (rows, cols) = (t.rows(), t.cols());
                let mut d = vec![0.0; rows * cols];
                d[index * cols..(index + 1) * cols].copy_from_slice(g.data());
                accum(grads, x, Tensor::matrix(rows, cols, d));
            }
            Op::Rows { x, indices } => {
                let t = self.value(x);
                let (rows, cols) = (t.rows(), t.cols());
                let mut d = vec![0.0; rows * cols];
                for (k, &idx) in indices.iter().enumerate() {
                    for j in 0..cols {
                        d[idx * cols + j] += g.data()[k * cols + j];
                    }
                }
                accum(grads, x, Tensor::matrix(rows, cols, d));
            }
            Op::Sum(x) => {
                let t = self.value(x);
                let gv = g.item();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: vec![gv; t.numel()],
                    },
                );
            }
            Op::Mean(x) => {
                let t = self.value(x);
                let gv = g.item() / t.numel() as f64;
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: vec![gv; t.numel()],
                    },
                );
            }
            Op::MeanRows(x) => {
                let t = self.value(x);
                let (rows, cols) = (t.rows(), t.cols());
                let mut d = vec![0.0; rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        d[i * cols + j] = g.data()[j] / rows as f64;
                    }
                }
                accum(grads, x, Tensor::matrix(rows, cols, d));
            }
            Op::Sigmoid(x) => {
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: out.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Tanh(x) => {
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * (1.0 - y * y))
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: out.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Relu(x) => {
                let t = self.value(x);
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 })
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Softplus(x) => {
                let t = self.value(x);
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(gv, v)| gv * stable_sigmoid(*v))
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Log(x) => {
                let t = self.value(x);
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(gv, v)| gv / v)
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Clamp { x, lo, hi } => {
                let t = self.value(x);
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(gv, v)| if *v > lo && *v < hi { *gv } else { 0.0 })
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::InvSqrtShift { x, eps } => {
                let t = self.value(x);
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(gv, v)| {
                        let y = 1.0 / (v + eps).sqrt();
                        gv * (-0.5) * y * y * y
                    })
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Softmax(x) => {
                let y = out.data();
                let s: f64 = g.data().iter().zip(y).map(|(gv, yv)| gv * yv).sum();
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(gv, yv)| yv * (gv - s))
                    .collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: out.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Dot(a, b) => {
                let gv = g.item();
                let ta = self.value(a);
                let tb = self.value(b);
                let da: Vec<f64> = tb.data().iter().map(|v| gv * v).collect();
                let db: Vec<f64> = ta.data().iter().map(|v| gv * v).collect();
                accum(grads, a, Tensor::vector(da));
                accum(grads, b, Tensor::vector(db));
            }
            Op::SumSq(x) => {
                let t = self.value(x);
                let gv = g.item();
                let d: Vec<f64> = t.data().iter().map(|v| 2.0 * gv * v).collect();
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: d,
                    },
                );
            }
            Op::Euclid(a, b) => {
                let dist = out.item();
                let ta = self.value(a);
                let tb = self.value(b);
                let gv = g.item();
                // Subgradient 0 at coincident points keeps margins finite.
                let (da, db): (Vec<f64>, Vec<f64>) = if dist > 0.0 {
                    ta.data()
                        .iter()
                        .zip(tb.data())
                        .map(|(x, y)| {
                            let u = gv * (x - y) / dist;
                            (u, -u)
                        })
                        .unzip()
                } else {
                    (vec![0.0; ta.numel()], vec![0.0; tb.numel()])
                };
                accum(grads, a, Tensor::vector(da));
                accum(grads, b, Tensor::vector(db));
            }
            Op::AddRow { m, v } => {
                let tm = self.value(m);
                let (rows, cols) = (tm.rows(), tm.cols());
                accum(grads, m, g.clone());
                let mut dv = vec![0.0; cols];
                for i in 0..rows {
                    for (j, d) in dv.iter_mut().enumerate() {
                        *d += g.data()[i * cols + j];
                    }
                }
                accum(grads, v, Tensor::vector(dv));
            }
            Op::MulRow { m, v } => {
                let tm = self.value(m);
                let tv = self.value(v);
                let (rows, cols) = (tm.rows(), tm.cols());
                let mut dm = vec![0.0; rows * cols];
                let mut dv = vec![0.0; cols];
                for i in 0..rows {
                    for j in 0..cols {
                        let gij = g.data()[i * cols + j];
                        dm[i * cols + j] = gij * tv.data()[j];
                        dv[j] += gij * tm.data()[i * cols + j];
                    }
                }
                accum(grads, m, Tensor::matrix(rows, cols, dm));
                accum(grads, v, Tensor::vector(dv));
            }
            Op::Reshape { x } => {
                let t = self.value(x);
                accum(
                    grads,
                    x,
                    Tensor {
                        shape: t.shape().to_vec(),
                        data: g.data().to_vec(),
                    },
                );
            }
        }
    }

    fn backprop_matmul(&self, a: NodeId, b: NodeId, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        let ta = self.value(a);
        let tb = self.value(b);
        let (m, k) = match ta.rank() {
            2 => (ta.rows(), ta.cols()),
            _ => (1, ta.shape()[0]),
        };
        let n = match tb.rank() {
            2 => tb.cols(),
            _ => 1,
        };
        let gd = g.data();
        let da_len = m * k;
        let mut da = vec![0.0; da_len];
        let mut db = vec![0.0; k * n];
        // dA = G * B^T, dB = A^T * G over the flattened layouts.
        for i in 0..m {
            for p in 0..k {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += gd[i * n + j] * tb.data()[p * n + j];
                }
                da[i * k + p] = acc;
            }
        }
        for p in 0..k {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += ta.data()[i * k + p] * gd[i * n + j];
                }
                db[p * n + j] = acc;
            }
        }
        accum(
            grads,
            a,
            Tensor {
                shape: ta.shape().to_vec(),
                data: da,
            },
        );
        accum(
            grads,
            b,
            Tensor {
                shape: tb.shape().to_vec(),
                data: db,
            },
        );
    }

    fn accum_broadcast(
        &self,
        grads: &mut Vec<Option<Tensor>>,
        target: NodeId,
        g: &Tensor,
        sign: f64,
    ) {
        let t = self.value(target);
        if t.is_scalar() && !g.is_scalar() {
            let s: f64 = g.data().iter().sum::<f64>() * sign;
            accum(grads, target, Tensor::scalar(s));
        } else {
            let d: Vec<f64> = g.data().iter().map(|v| v * sign).collect();
            accum(
                grads,
                target,
                Tensor {
                    shape: t.shape().to_vec(),
                    data: d,
                },
            );
        }
    }

    /// Whether a node was created with [`Graph::param`].
    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.nodes[id.0].trainable
    }
}

fn accum(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), delta.shape());
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
