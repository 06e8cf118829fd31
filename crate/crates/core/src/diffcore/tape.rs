use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Neg,
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    Minimum,
    Maximum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Row,
    Col,
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var),
    AddBroadcast(Broadcast, Var, Var),
    MulRow(Var, Var),
    Scale(Var, S),
    AddScalar(Var),
    Unary(Unary, Var),
    Clamp(Var, S, S),
    Softmax(Var, usize),
    LogSoftmax(Var),
    Sum(Var),
    SumRows(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    LayerNorm(Var, S),
    DeformSample {
        maps: Vec<Var>,
        loc: Var,
        heads: usize,
        points: usize,
    },
    GroupDot(Var, Var),
    GroupWeightedSum(Var, Var),
}

impl<S> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Binary(..) => "binary",
            Op::AddBroadcast(..) => "add_broadcast",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Unary(..) => "unary",
            Op::Clamp(..) => "clamp",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Sum(..) => "sum",
            Op::SumRows(..) => "sum_rows",
            Op::Reshape(..) => "reshape",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::Pick(..) => "pick",
            Op::LayerNorm(..) => "layer_norm",
            Op::DeformSample { .. } => "deform_sample",
            Op::GroupDot(..) => "group_dot",
            Op::GroupWeightedSum(..) => "group_weighted_sum",
        }
    }
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    tracked: bool,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

/// Records operations in execution order and replays them backwards.
///
/// Inputs always precede the nodes that consume them, so reverse
/// recording order is a valid reverse topological order.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    checked: bool,
    /// Running hash of every piecewise choice made by the forward pass.
    branches: u64,
}

const BRANCH_SEED: u64 = 0xcbf2_9ce4_8422_2325;

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn broadcast_pair(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b {
        Some(a.to_vec())
    } else if na == 1 {
        Some(b.to_vec())
    } else if nb == 1 {
        Some(a.to_vec())
    } else {
        None
    }
}

impl<S: Scalar> Tape<S> {
    /// A checked tape: non-finite results and domain violations are errors.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            checked: true,
            branches: BRANCH_SEED,
        }
    }

    pub fn unchecked() -> Self {
        Self {
            nodes: Vec::new(),
            checked: false,
            branches: BRANCH_SEED,
        }
    }

    /// Folds a discrete decision into [`Tape::branch_signature`]. Ops with
    /// kinks call this for every element; code that makes its own discrete
    /// choices from tape values (a matching, say) should too.
    pub fn note_branch(&mut self, choice: u64) {
        self.branches = (self.branches ^ choice).wrapping_mul(0x0000_0100_0000_01b3);
    }

    /// Identifies the smooth piece the forward pass ran on. Two evaluations
    /// with equal signatures took the same branch at every kink, so the
    /// function is differentiable along a path between them as long as no
    /// kink is crossed and crossed back in between.
    pub fn branch_signature(&self) -> u64 {
        self.branches
    }

    pub fn set_checked(&mut self, checked: bool) {
        self.checked = checked;
    }

    pub fn is_checked(&self) -> bool {
        self.checked
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf that receives a gradient on `backward`.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: requires_grad,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar_constant(&mut self, value: S) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor<S>> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::from_parts(node.value.shape().to_vec(), g.clone()))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize), TensorError> {
        self.nodes[v.0].value.dims2()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<S>, op: Op<S>) -> Result<Var, TensorError> {
        if self.checked && data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(op.name()));
        }
        let tracked = self.inputs(&op).iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, data),
            op,
            tracked,
            requires_grad: false,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs(&self, op: &Op<S>) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Binary(_, a, b)
            | Op::AddBroadcast(_, a, b)
            | Op::MulRow(a, b)
            | Op::GroupDot(a, b)
            | Op::GroupWeightedSum(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Unary(_, a)
            | Op::Clamp(a, ..)
            | Op::Softmax(a, _)
            | Op::LogSoftmax(a)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::Reshape(a)
            | Op::SliceCols(a, _)
            | Op::GatherRows(a, _)
            | Op::Pick(a, _)
            | Op::LayerNorm(a, _) => vec![*a],
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.clone(),
            Op::DeformSample { maps, loc, .. } => {
                let mut v = maps.clone();
                v.push(*loc);
                v
            }
        }
    }

    // ----------------------------------------------------------------
    // forward ops
    // ----------------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(TensorError::Shape(format!(
                "matmul inner dimensions differ: {:?} · {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            S::zero(),
            &mut out,
            (n as isize, 1),
        );
        self.push(vec![m, n], out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        let src = self.value(a).data();
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        self.push(vec![n, m], out, Op::Transpose(a))
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let shape = match kind {
            Binary::Minimum | Binary::Maximum if sa != sb => None,
            _ => broadcast_pair(&sa, &sb),
        }
        .ok_or_else(|| {
            TensorError::Shape(format!("{kind:?}: incompatible shapes {sa:?} and {sb:?}"))
        })?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let n: usize = shape.iter().product();
        let at = |i: usize| if da.len() == 1 { da[0] } else { da[i] };
        let bt = |i: usize| if db.len() == 1 { db[0] } else { db[i] };
        if kind == Binary::Div && self.checked {
            if let Some(i) = (0..n).find(|&i| bt(i) == S::zero()) {
                return Err(TensorError::Domain {
                    op: "div",
                    detail: format!("division by zero at element {i}"),
                });
            }
        }
        let sides: Vec<u64> = if matches!(kind, Binary::Minimum | Binary::Maximum) {
            (0..n)
                .map(|i| at(i).partial_cmp(&bt(i)).map_or(3, |o| o as i8 as u64 & 3))
                .collect()
        } else {
            Vec::new()
        };
        let out: Vec<S> = (0..n)
            .map(|i| {
                let (x, y) = (at(i), bt(i));
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                    Binary::Minimum => {
                        if x <= y {
                            x
                        } else {
                            y
                        }
                    }
                    Binary::Maximum => {
                        if x >= y {
                            x
                        } else {
                            y
                        }
                    }
                }
            })
            .collect();
        for side in sides {
            self.note_branch(side);
        }
        self.push(shape, out, Op::Binary(kind, a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Div, a, b)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Minimum, a, b)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Maximum, a, b)
    }

    fn add_broadcast(&mut self, kind: Broadcast, a: Var, v: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        let expected = match kind {
            Broadcast::Row => [1, n],
            Broadcast::Col => [m, 1],
        };
        if self.shape(v) != expected {
            return Err(TensorError::Shape(format!(
                "broadcast add of {:?} onto {:?} needs {expected:?}",
                self.shape(v),
                self.shape(a)
            )));
        }
        let (da, dv) = (self.value(a).data(), self.value(v).data());
        let mut out = da.to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = out[i * n + j]
                    + match kind {
                        Broadcast::Row => dv[j],
                        Broadcast::Col => dv[i],
                    };
            }
        }
        self.push(vec![m, n], out, Op::AddBroadcast(kind, a, v))
    }

    /// `a[i, j] + row[j]` for `row` of shape `[1, n]` (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        self.add_broadcast(Broadcast::Row, a, row)
    }

    /// `a[i, j] + col[i]` for `col` of shape `[m, 1]`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var, TensorError> {
        self.add_broadcast(Broadcast::Col, a, col)
    }

    /// `a[i, j] * row[j]` for `row` of shape `[1, n]`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        if self.shape(row) != [1, n] {
            return Err(TensorError::Shape(format!(
                "mul_row of {:?} onto {:?}",
                self.shape(row),
                self.shape(a)
            )));
        }
        let (da, dr) = (self.value(a).data(), self.value(row).data());
        let out = (0..m * n).map(|i| da[i] * dr[i % n]).collect();
        self.push(vec![m, n], out, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Result<Var, TensorError> {
        let out = self.value(a).data().iter().map(|&x| x * c).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: S) -> Result<Var, TensorError> {
        let out = self.value(a).data().iter().map(|&x| x + c).collect();
        self.push(self.shape(a).to_vec(), out, Op::AddScalar(a))
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var, TensorError> {
        let src = self.value(a).data();
        if kind == Unary::Log && self.checked {
            if let Some(i) = src.iter().position(|&x| x <= S::zero()) {
                return Err(TensorError::Domain {
                    op: "log",
                    detail: format!("non-positive argument {} at element {i}", src[i]),
                });
            }
        }
        let out = src
            .iter()
            .map(|&x| match kind {
                Unary::Neg => -x,
                Unary::Sigmoid => sigmoid(x),
                Unary::Tanh => x.tanh(),
                Unary::Relu => {
                    if x > S::zero() {
                        x
                    } else {
                        S::zero()
                    }
                }
                Unary::Exp => x.exp(),
                Unary::Log => x.ln(),
            })
            .collect();
        if kind == Unary::Relu {
            let signs: Vec<u64> = src.iter().map(|&x| u64::from(x > S::zero())).collect();
            for s in signs {
                self.note_branch(s);
            }
        }
        self.push(self.shape(a).to_vec(), out, Op::Unary(kind, a))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Neg, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Relu, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Log, a)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Result<Var, TensorError> {
        let src = self.value(a).data();
        let out = src.iter().map(|&x| x.max(lo).min(hi)).collect();
        let regions: Vec<u64> = src
            .iter()
            .map(|&x| u64::from(x > lo) + u64::from(x >= hi))
            .collect();
        for r in regions {
            self.note_branch(r);
        }
        self.push(self.shape(a).to_vec(), out, Op::Clamp(a, lo, hi))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Shape(format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        let out = softmax_along(self.value(a).data(), &shape, axis);
        self.push(shape, out, Op::Softmax(a, axis))
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        let src = self.value(a).data();
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let max = row.iter().fold(S::neg_infinity(), |acc, &x| acc.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<S>().ln();
            for j in 0..n {
                out[i * n + j] = row[j] - lse;
            }
        }
        self.push(vec![m, n], out, Op::LogSoftmax(a))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total = self
            .value(a)
            .data()
            .iter()
            .fold(S::zero(), |acc, &x| acc + x);
        self.push(vec![1], vec![total], Op::Sum(a))
    }

    /// Sum of all elements accumulated in ascending value order, so the
    /// result does not depend on element order.
    pub fn sum_canonical(&mut self, a: Var) -> Result<Var, TensorError> {
        let mut vals = self.value(a).data().to_vec();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        let total = vals.into_iter().fold(S::zero(), |acc, x| acc + x);
        self.push(vec![1], vec![total], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = S::from_usize_lossy(self.value(a).numel());
        let s = self.sum(a)?;
        self.scale(s, S::one() / n)
    }

    /// Row sums of a matrix, `[m, n] -> [m, 1]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        let src = self.value(a).data();
        let out = (0..m)
            .map(|i| {
                src[i * n..(i + 1) * n]
                    .iter()
                    .fold(S::zero(), |acc, &x| acc + x)
            })
            .collect();
        self.push(vec![m, 1], out, Op::SumRows(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let reshaped = self.value(a).reshape(shape)?;
        let data = reshaped.data().to_vec();
        self.push(shape.to_vec(), data, Op::Reshape(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Shape("concat of zero tensors".into()));
        };
        let m = self.dims2(first)?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if r != m {
                return Err(TensorError::Shape(format!(
                    "concat_cols row mismatch: {r} vs {m}"
                )));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push(vec![m, n], out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Shape("concat of zero tensors".into()));
        };
        let n = self.dims2(first)?.1;
        let mut m = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if c != n {
                return Err(TensorError::Shape(format!(
                    "concat_rows column mismatch: {c} vs {n}"
                )));
            }
            m += r;
            out.extend_from_slice(self.value(p).data());
        }
        self.push(vec![m, n], out, Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        if start >= end || end > n {
            return Err(TensorError::Shape(format!(
                "column slice {start}..{end} of width {n}"
            )));
        }
        let src = self.value(a).data();
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        self.push(vec![m, w], out, Op::SliceCols(a, start))
    }

    /// Rows selected by `indices` (repeats allowed), e.g. embedding lookup.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        if indices.is_empty() {
            return Err(TensorError::Shape("gather of zero rows".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(TensorError::Contract(format!(
                "row index {bad} out of range for {m} rows"
            )));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        self.push(
            vec![indices.len(), n],
            out,
            Op::GatherRows(a, indices.to_vec()),
        )
    }

    /// `out[i] = a[i, indices[i]]`, shape `[m, 1]`.
    pub fn pick(&mut self, a: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        if indices.len() != m {
            return Err(TensorError::Shape(format!(
                "pick needs {m} indices, got {}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= n) {
            return Err(TensorError::Contract(format!(
                "column index {bad} out of range for width {n}"
            )));
        }
        let src = self.value(a).data();
        let out = indices
            .iter()
            .enumerate()
            .map(|(i, &j)| src[i * n + j])
            .collect();
        self.push(vec![m, 1], out, Op::Pick(a, indices.to_vec()))
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)`.
    pub fn layer_norm(&mut self, a: Var, eps: S) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a)?;
        let src = self.value(a).data();
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let (mean, rstd) = row_moments(row, eps);
            for j in 0..n {
                out[i * n + j] = (row[j] - mean) * rstd;
            }
        }
        self.push(vec![m, n], out, Op::LayerNorm(a, eps))
    }

    /// Deformable linear sampling over a multi-level temporal pyramid.
    ///
    /// `maps[l]` is `[T_l, D]`; `loc` is `[Q, H*L*K]` with column index
    /// `(h*L + l)*K + k` holding a normalized coordinate. The output is
    /// `[Q*H*L*K, D/H]`, row `((q*H + h)*L + l)*K + k` holding the head-`h`
    /// channel slice of map `l` interpolated at `u = loc * (T_l - 1)`.
    /// Coordinates with `u` outside `[0, T_l - 1]` sample zeros.
    pub fn deform_sample(
        &mut self,
        maps: &[Var],
        loc: Var,
        heads: usize,
        points: usize,
    ) -> Result<Var, TensorError> {
        let levels = maps.len();
        if levels == 0 || heads == 0 || points == 0 {
            return Err(TensorError::Shape(
                "deform_sample needs levels, heads and points".into(),
            ));
        }
        let d = self.dims2(maps[0])?.1;
        if d % heads != 0 {
            return Err(TensorError::Shape(format!(
                "channel width {d} not divisible by {heads} heads"
            )));
        }
        for &m in maps {
            if self.dims2(m)?.1 != d {
                return Err(TensorError::Shape("pyramid levels differ in width".into()));
            }
        }
        let (q, cols) = self.dims2(loc)?;
        if cols != heads * levels * points {
            return Err(TensorError::Shape(format!(
                "sampling locations have {cols} columns, expected {}",
                heads * levels * points
            )));
        }
        let dh = d / heads;
        let mut out = vec![S::zero(); q * cols * dh];
        let mut taps = Vec::with_capacity(q * cols);
        let locs = self.value(loc).data();
        for qi in 0..q {
            for h in 0..heads {
                for (l, &map) in maps.iter().enumerate() {
                    let mv = self.value(map);
                    let t = mv.shape()[0];
                    let md = mv.data();
                    for k in 0..points {
                        let col = (h * levels + l) * points + k;
                        let Some(tap) = Tap::new(locs[qi * cols + col], t) else {
                            taps.push(u64::MAX);
                            continue;
                        };
                        taps.push(tap.i0 as u64);
                        let row = qi * cols + col;
                        let dst = &mut out[row * dh..(row + 1) * dh];
                        let r0 = &md[tap.i0 * d + h * dh..tap.i0 * d + (h + 1) * dh];
                        let r1 = &md[tap.i1 * d + h * dh..tap.i1 * d + (h + 1) * dh];
                        for c in 0..dh {
                            dst[c] = tap.w0 * r0[c] + tap.w1 * r1[c];
                        }
                    }
                }
            }
        }
        for tap in taps {
            self.note_branch(tap);
        }
        self.push(
            vec![q * cols, dh],
            out,
            Op::DeformSample {
                maps: maps.to_vec(),
                loc,
                heads,
                points,
            },
        )
    }

    /// `out[g, p] = query[g] · keys[g*P + p]`, shapes `[G, D]`, `[G*P, D]`.
    pub fn group_dot(&mut self, query: Var, keys: Var) -> Result<Var, TensorError> {
        let (g, d) = self.dims2(query)?;
        let (gp, d2) = self.dims2(keys)?;
        if d != d2 || gp % g != 0 {
            return Err(TensorError::Shape(format!(
                "group_dot of {:?} with {:?}",
                self.shape(query),
                self.shape(keys)
            )));
        }
        let p = gp / g;
        let (dq, dk) = (self.value(query).data(), self.value(keys).data());
        let mut out = vec![S::zero(); g * p];
        for gi in 0..g {
            let qrow = &dq[gi * d..(gi + 1) * d];
            for pi in 0..p {
                let krow = &dk[(gi * p + pi) * d..(gi * p + pi + 1) * d];
                out[gi * p + pi] = dot(qrow, krow);
            }
        }
        self.push(vec![g, p], out, Op::GroupDot(query, keys))
    }

    /// `out[g] = Σ_p weights[g, p] * values[g*P + p]`.
    pub fn group_weighted_sum(&mut self, weights: Var, values: Var) -> Result<Var, TensorError> {
        let (g, p) = self.dims2(weights)?;
        let (gp, d) = self.dims2(values)?;
        if gp != g * p {
            return Err(TensorError::Shape(format!(
                "group_weighted_sum of {:?} with {:?}",
                self.shape(weights),
                self.shape(values)
            )));
        }
        let (dw, dv) = (self.value(weights).data(), self.value(values).data());
        let mut out = vec![S::zero(); g * d];
        for gi in 0..g {
            let dst = &mut out[gi * d..(gi + 1) * d];
            for pi in 0..p {
                let w = dw[gi * p + pi];
                let src = &dv[(gi * p + pi) * d..(gi * p + pi + 1) * d];
                for c in 0..d {
                    dst[c] = dst[c] + w * src[c];
                }
            }
        }
        self.push(vec![g, d], out, Op::GroupWeightedSum(weights, values))
    }

    // ----------------------------------------------------------------
    // backward
    // ----------------------------------------------------------------

    /// Accumulates `d loss / d leaf` into every leaf created with
    /// `requires_grad`. Gradients add up across calls until `zero_grad`.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![S::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].tracked {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                if self.checked && g.iter().any(|v| !v.is_finite()) {
                    return Err(TensorError::NonFinite("backward"));
                }
                let node = &mut self.nodes[idx];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("matrix");
                let n = self.value(*b).shape()[1];
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.slot(grads, *a) {
                    // ga += g · bᵀ
                    S::gemm(
                        m,
                        n,
                        k,
                        g,
                        (n as isize, 1),
                        db,
                        (1, n as isize),
                        S::one(),
                        ga,
                        (k as isize, 1),
                    );
                }
                if let Some(gb) = self.slot(grads, *b) {
                    // gb += aᵀ · g
                    S::gemm(
                        k,
                        m,
                        n,
                        da,
                        (1, k as isize),
                        g,
                        (n as isize, 1),
                        S::one(),
                        gb,
                        (n as isize, 1),
                    );
                }
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(*a).dims2().expect("matrix");
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] = ga[i * n + j] + g[j * m + i];
                        }
                    }
                }
            }
            Op::Binary(kind, a, b) => self.binary_backward(*kind, *a, *b, g, grads),
            Op::AddBroadcast(kind, a, v) => {
                let n = node.value.shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gv) = self.slot(grads, *v) {
                    for (i, &gi) in g.iter().enumerate() {
                        let t = match kind {
                            Broadcast::Row => i % n,
                            Broadcast::Col => i / n,
                        };
                        gv[t] = gv[t] + gi;
                    }
                }
            }
            Op::MulRow(a, r) => {
                let n = node.value.shape()[1];
                let (da, dr) = (self.value(*a).data(), self.value(*r).data());
                if let Some(ga) = self.slot(grads, *a) {
                    for (i, &gi) in g.iter().enumerate() {
                        ga[i] = ga[i] + gi * dr[i % n];
                    }
                }
                if let Some(gr) = self.slot(grads, *r) {
                    for (i, &gi) in g.iter().enumerate() {
                        gr[i % n] = gr[i % n] + gi * da[i];
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, &gi)| *x = *x + gi * *c);
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
            }
            Op::Unary(kind, a) => {
                let x = self.value(*a).data();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        let d = match kind {
                            Unary::Neg => -S::one(),
                            Unary::Sigmoid => out[i] * (S::one() - out[i]),
                            Unary::Tanh => S::one() - out[i] * out[i],
                            Unary::Relu => {
                                if x[i] > S::zero() {
                                    S::one()
                                } else {
                                    S::zero()
                                }
                            }
                            Unary::Exp => out[i],
                            Unary::Log => S::one() / x[i],
                        };
                        ga[i] = ga[i] + g[i] * d;
                    }
                }
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).data();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        if x[i] >= *lo && x[i] <= *hi {
                            ga[i] = ga[i] + g[i];
                        }
                    }
                }
            }
            Op::Softmax(a, axis) => {
                let shape = node.value.shape();
                if let Some(ga) = self.slot(grads, *a) {
                    let (outer, len, inner) = axis_layout(shape, *axis);
                    for o in 0..outer {
                        for inn in 0..inner {
                            let at = |t: usize| o * len * inner + t * inner + inn;
                            let dotp = (0..len).fold(S::zero(), |s, t| s + g[at(t)] * out[at(t)]);
                            for t in 0..len {
                                let i = at(t);
                                ga[i] = ga[i] + out[i] * (g[i] - dotp);
                            }
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let n = node.value.shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    for (row_g, (row_o, row_a)) in
                        g.chunks(n).zip(out.chunks(n).zip(ga.chunks_mut(n)))
                    {
                        let total = row_g.iter().fold(S::zero(), |s, &x| s + x);
                        for j in 0..n {
                            row_a[j] = row_a[j] + row_g[j] - row_o[j].exp() * total;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().for_each(|x| *x = *x + g[0]);
                }
            }
            Op::SumRows(a) => {
                let n = self.value(*a).shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    for (i, x) in ga.iter_mut().enumerate() {
                        *x = *x + g[i / n];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let m = node.value.shape()[0];
                let n = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    if let Some(gp) = self.slot(grads, p) {
                        for i in 0..m {
                            for j in 0..w {
                                gp[i * w + j] = gp[i * w + j] + g[i * n + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if let Some(gp) = self.slot(grads, p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let n = self.value(*a).shape()[1];
                let w = node.value.shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    for (i, row) in g.chunks(w).enumerate() {
                        for (j, &x) in row.iter().enumerate() {
                            let t = i * n + start + j;
                            ga[t] = ga[t] + x;
                        }
                    }
                }
            }
            Op::GatherRows(a, indices) => {
                let n = self.value(*a).shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    for (r, &i) in indices.iter().enumerate() {
                        add_into(&mut ga[i * n..(i + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::Pick(a, indices) => {
                let n = self.value(*a).shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    for (i, &j) in indices.iter().enumerate() {
                        ga[i * n + j] = ga[i * n + j] + g[i];
                    }
                }
            }
            Op::LayerNorm(a, eps) => {
                let n = node.value.shape()[1];
                let x = self.value(*a).data();
                if let Some(ga) = self.slot(grads, *a) {
                    let nn = S::from_usize_lossy(n);
                    for (i, row_g) in g.chunks(n).enumerate() {
                        let (_, rstd) = row_moments(&x[i * n..(i + 1) * n], *eps);
                        let y = &out[i * n..(i + 1) * n];
                        let mean_g = row_g.iter().fold(S::zero(), |s, &v| s + v) / nn;
                        let mean_gy = row_g
                            .iter()
                            .zip(y)
                            .fold(S::zero(), |s, (&gv, &yv)| s + gv * yv)
                            / nn;
                        for j in 0..n {
                            let t = i * n + j;
                            ga[t] = ga[t] + rstd * (row_g[j] - mean_g - y[j] * mean_gy);
                        }
                    }
                }
            }
            Op::DeformSample {
                maps,
                loc,
                heads,
                points,
            } => self.deform_backward(maps, *loc, *heads, *points, g, grads),
            Op::GroupDot(q, k) => {
                let (gn, d) = self.value(*q).dims2().expect("matrix");
                let p = node.value.shape()[1];
                let (dq, dk) = (self.value(*q).data(), self.value(*k).data());
                if let Some(gq) = self.slot(grads, *q) {
                    for gi in 0..gn {
                        for pi in 0..p {
                            let w = g[gi * p + pi];
                            let krow = &dk[(gi * p + pi) * d..(gi * p + pi + 1) * d];
                            axpy(&mut gq[gi * d..(gi + 1) * d], w, krow);
                        }
                    }
                }
                if let Some(gk) = self.slot(grads, *k) {
                    for gi in 0..gn {
                        for pi in 0..p {
                            let w = g[gi * p + pi];
                            let r = gi * p + pi;
                            axpy(&mut gk[r * d..(r + 1) * d], w, &dq[gi * d..(gi + 1) * d]);
                        }
                    }
                }
            }
            Op::GroupWeightedSum(w, v) => {
                let (gn, p) = self.value(*w).dims2().expect("matrix");
                let d = node.value.shape()[1];
                let (dw, dv) = (self.value(*w).data(), self.value(*v).data());
                if let Some(gw) = self.slot(grads, *w) {
                    for gi in 0..gn {
                        for pi in 0..p {
                            let r = gi * p + pi;
                            gw[r] = gw[r] + dot(&g[gi * d..(gi + 1) * d], &dv[r * d..(r + 1) * d]);
                        }
                    }
                }
                if let Some(gv) = self.slot(grads, *v) {
                    for gi in 0..gn {
                        for pi in 0..p {
                            let r = gi * p + pi;
                            axpy(&mut gv[r * d..(r + 1) * d], dw[r], &g[gi * d..(gi + 1) * d]);
                        }
                    }
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<S>>], v: Var) -> Option<&'g mut Vec<S>> {
        if !self.nodes[v.0].tracked {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![S::zero(); n]))
    }

    fn binary_backward(&self, kind: Binary, a: Var, b: Var, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let at = |i: usize| if da.len() == 1 { da[0] } else { da[i] };
        let bt = |i: usize| if db.len() == 1 { db[0] } else { db[i] };
        for (side, v) in [(0usize, a), (1, b)] {
            if !self.nodes[v.0].tracked {
                continue;
            }
            let n = self.nodes[v.0].value.numel();
            let gv = grads[v.0].get_or_insert_with(|| vec![S::zero(); n]);
            for (i, &gi) in g.iter().enumerate() {
                let (x, y) = (at(i), bt(i));
                let d = match (kind, side) {
                    (Binary::Add, _) => S::one(),
                    (Binary::Sub, 0) => S::one(),
                    (Binary::Sub, _) => -S::one(),
                    (Binary::Mul, 0) => y,
                    (Binary::Mul, _) => x,
                    (Binary::Div, 0) => S::one() / y,
                    (Binary::Div, _) => -x / (y * y),
                    (Binary::Minimum, 0) => bool_scalar(x <= y),
                    (Binary::Minimum, _) => bool_scalar(x > y),
                    (Binary::Maximum, 0) => bool_scalar(x >= y),
                    (Binary::Maximum, _) => bool_scalar(x < y),
                };
                let t = if n == 1 { 0 } else { i };
                gv[t] = gv[t] + gi * d;
            }
        }
    }

    fn deform_backward(
        &self,
        maps: &[Var],
        loc: Var,
        heads: usize,
        points: usize,
        g: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        let levels = maps.len();
        let d = self.value(maps[0]).shape()[1];
        let dh = d / heads;
        let (q, cols) = self.value(loc).dims2().expect("matrix");
        let locs = self.value(loc).data();
        let loc_tracked = self.nodes[loc.0].tracked;
        let mut gloc = vec![S::zero(); if loc_tracked { q * cols } else { 0 }];
        for (l, &map) in maps.iter().enumerate() {
            let mv = self.value(map);
            let t = mv.shape()[0];
            let md = mv.data();
            let map_tracked = self.nodes[map.0].tracked;
            let mut gmap = grads[map.0].take();
            if map_tracked && gmap.is_none() {
                gmap = Some(vec![S::zero(); t * d]);
            }
            for qi in 0..q {
                for h in 0..heads {
                    for k in 0..points {
                        let col = (h * levels + l) * points + k;
                        let Some(tap) = Tap::new(locs[qi * cols + col], t) else {
                            continue;
                        };
                        let row = qi * cols + col;
                        let grow = &g[row * dh..(row + 1) * dh];
                        let c0 = tap.i0 * d + h * dh;
                        let c1 = tap.i1 * d + h * dh;
                        if let Some(gm) = gmap.as_mut() {
                            axpy(&mut gm[c0..c0 + dh], tap.w0, grow);
                            axpy(&mut gm[c1..c1 + dh], tap.w1, grow);
                        }
                        if loc_tracked && tap.i1 != tap.i0 {
                            let diff = (0..dh)
                                .fold(S::zero(), |s, c| s + grow[c] * (md[c1 + c] - md[c0 + c]));
                            gloc[qi * cols + col] =
                                gloc[qi * cols + col] + diff * S::from_usize_lossy(t - 1);
                        }
                    }
                }
            }
            grads[map.0] = gmap;
        }
        if loc_tracked {
            let gl = grads[loc.0].get_or_insert_with(|| vec![S::zero(); q * cols]);
            add_into(gl, &gloc);
        }
    }
}

/// One linear-interpolation tap on a sequence of length `t`.
struct Tap<S> {
    i0: usize,
    i1: usize,
    w0: S,
    w1: S,
}

impl<S: Scalar> Tap<S> {
    fn new(p: S, t: usize) -> Option<Self> {
        let top = S::from_usize_lossy(t - 1);
        let u = p * top;
        if !(u >= S::zero() && u <= top) {
            return None;
        }
        let i0 = u.floor().to_usize().unwrap_or(0).min(t - 1);
        let i1 = (i0 + 1).min(t - 1);
        let w1 = u - S::from_usize_lossy(i0);
        Some(Self {
            i0,
            i1,
            w0: S::one() - w1,
            w1,
        })
    }
}

pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn bool_scalar<S: Scalar>(b: bool) -> S {
    if b {
        S::one()
    } else {
        S::zero()
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |s, (&x, &y)| s + x * y)
}

fn axpy<S: Scalar>(dst: &mut [S], w: S, src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + w * s;
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn row_moments<S: Scalar>(row: &[S], eps: S) -> (S, S) {
    let n = S::from_usize_lossy(row.len());
    let mean = row.iter().fold(S::zero(), |s, &x| s + x) / n;
    let var = row
        .iter()
        .fold(S::zero(), |s, &x| s + (x - mean) * (x - mean))
        / n;
    (mean, S::one() / (var + eps).sqrt())
}

fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax_along<S: Scalar>(src: &[S], shape: &[usize], axis: usize) -> Vec<S> {
    let (outer, len, inner) = axis_layout(shape, axis);
    let mut out = vec![S::zero(); src.len()];
    for o in 0..outer {
        for inn in 0..inner {
            let at = |t: usize| o * len * inner + t * inner + inn;
            let max = (0..len).fold(S::neg_infinity(), |m, t| m.max(src[at(t)]));
            let mut total = S::zero();
            for t in 0..len {
                let e = (src[at(t)] - max).exp();
                out[at(t)] = e;
                total = total + e;
            }
            for t in 0..len {
                out[at(t)] = out[at(t)] / total;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signature(x: f64) -> u64 {
        let mut t = Tape::<f64>::new();
        let v = t.constant(Tensor::from_f64(&[1, 1], &[x]).unwrap());
        let r = t.relu(v).unwrap();
        let _ = t.clamp(r, 0.0, 2.0).unwrap();
        t.branch_signature()
    }

    #[test]
    fn signature_tracks_the_smooth_piece() {
        assert_eq!(signature(0.3), signature(0.4));
        assert_ne!(signature(0.3), signature(-0.3));
        assert_ne!(signature(1.9), signature(2.1));
    }

    #[test]
    fn interpolation_row_enters_the_signature() {
        let piece = |p: f64| {
            let mut t = Tape::<f64>::new();
            let map = t.constant(Tensor::zeros(&[5, 2]));
            let loc = t.constant(Tensor::from_f64(&[1, 1], &[p]).unwrap());
            t.deform_sample(&[map], loc, 1, 1).unwrap();
            t.branch_signature()
        };
        // Rows sit at multiples of 0.25.
        assert_eq!(piece(0.30), piece(0.45));
        assert_ne!(piece(0.49), piece(0.51));
        assert_ne!(piece(0.99), piece(1.01));
    }

    #[test]
    fn matmul_gradients() {
        let mut t = Tape::<f64>::new();
        let a = t.param(Tensor::from_f64(&[1, 2], &[1.0, 2.0]).unwrap());
        let b = t.param(Tensor::from_f64(&[2, 1], &[3.0, 4.0]).unwrap());
        let y = t.matmul(a, b).unwrap();
        assert_eq!(t.value(y).item(), 11.0);
        t.backward(y).unwrap();
        assert_eq!(t.grad(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(t.grad(b).unwrap().data(), &[1.0, 2.0]);
    }
}
