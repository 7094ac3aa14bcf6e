use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeometry};
use super::Tensor;
use crate::{Error, Result};

/// Handle to a node recorded in a [`DiffGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => kernels::sigmoid(x),
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Kind of a recorded operation, without its operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    SoftmaxRows,
    MaskedSoftmaxRows,
    Activation,
    GlobalAvgPool,
    Conv2d,
    Affine,
    AddChannelBias,
    ChannelScale,
    Add,
    Mul,
    Sum,
    Reshape,
    Concat,
    StackRows,
    OuterSum,
    BceLoss,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulCanonical(NodeId, NodeId),
    SoftmaxRows(NodeId),
    MaskedSoftmaxRows(NodeId, Vec<bool>),
    Activation(NodeId, Activation),
    GlobalAvgPool(NodeId),
    Conv2d { x: NodeId, k: NodeId, geom: ConvGeometry },
    Affine { x: NodeId, a: NodeId, b: NodeId },
    AddChannelBias { x: NodeId, b: NodeId },
    ChannelScale { x: NodeId, g: NodeId },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sum(NodeId),
    Reshape(NodeId, Vec<usize>),
    Concat(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    OuterSum(NodeId, NodeId),
    BceLoss { logits: NodeId, targets: Vec<f64>, eps: f64 },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) | Op::MatMulCanonical(..) => OpKind::MatMul,
            Op::SoftmaxRows(_) => OpKind::SoftmaxRows,
            Op::MaskedSoftmaxRows(..) => OpKind::MaskedSoftmaxRows,
            Op::Activation(..) => OpKind::Activation,
            Op::GlobalAvgPool(_) => OpKind::GlobalAvgPool,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Affine { .. } => OpKind::Affine,
            Op::AddChannelBias { .. } => OpKind::AddChannelBias,
            Op::ChannelScale { .. } => OpKind::ChannelScale,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::Sum(_) => OpKind::Sum,
            Op::Reshape(..) => OpKind::Reshape,
            Op::Concat(_) => OpKind::Concat,
            Op::StackRows(_) => OpKind::StackRows,
            Op::OuterSum(..) => OpKind::OuterSum,
            Op::BceLoss { .. } => OpKind::BceLoss,
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => Vec::new(),
            Op::SoftmaxRows(a)
            | Op::MaskedSoftmaxRows(a, _)
            | Op::Activation(a, _)
            | Op::GlobalAvgPool(a)
            | Op::Sum(a)
            | Op::Reshape(a, _) => vec![*a],
            Op::BceLoss { logits, .. } => vec![*logits],
            Op::MatMul(a, b) | Op::MatMulCanonical(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::OuterSum(a, b) => vec![*a, *b],
            Op::Conv2d { x, k, .. } => vec![*x, *k],
            Op::Affine { x, a, b } => vec![*x, *a, *b],
            Op::AddChannelBias { x, b } => vec![*x, *b],
            Op::ChannelScale { x, g } => vec![*x, *g],
            Op::Concat(ids) | Op::StackRows(ids) => ids.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Vec<f64>,
    requires_grad: bool,
    needs_grad: bool,
    op: Op,
}

/// Ordered record of tensor operations supporting reverse-mode gradients.
///
/// Nodes are appended in execution order, so the record is topological by
/// construction. Leaf gradients accumulate across [`DiffGraph::backward`]
/// calls until [`DiffGraph::zero_grad`]; intermediate adjoints are scratch
/// space local to each pass.
#[derive(Clone, Debug, Default)]
pub struct DiffGraph {
    nodes: Vec<Node>,
}

impl DiffGraph {
    pub fn new() -> Self {
        DiffGraph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    /// Records a trainable input whose gradient is accumulated.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, requires_grad, needs_grad: requires_grad, op: Op::Leaf });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a node (zero for anything but `param` leaves).
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn op_kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn inputs(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.inputs()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Overwrites the value of a leaf. Call [`DiffGraph::replay`] afterwards
    /// to refresh everything downstream.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = self.nodes.get_mut(id.0).ok_or(Error::UnknownNode(id.0))?;
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::InvalidArgument(format!("node {} is not a leaf", id.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_leaf",
                format!("{:?} cannot replace {:?}", value.shape(), node.value.shape()),
            ));
        }
        node.value = value;
        Ok(())
    }

    /// Recomputes every recorded operation from the current leaf values.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    fn record(&mut self, op: Op) -> Result<NodeId> {
        for input in op.inputs() {
            self.node(input)?;
        }
        let value = self.eval(&op)?;
        let needs_grad = op.inputs().iter().any(|i| self.nodes[i.0].needs_grad);
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, requires_grad: false, needs_grad, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul(a, b))
    }

    /// Matrix product summed over the inner dimension in an order fixed by
    /// the operand values, so permuting that dimension in both operands
    /// leaves the result bit-identical.
    pub fn matmul_canonical(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMulCanonical(a, b))
    }

    pub fn softmax_rows(&mut self, m: NodeId) -> Result<NodeId> {
        self.record(Op::SoftmaxRows(m))
    }

    /// Row softmax over the entries where `mask` is true; every row needs
    /// at least one such entry.
    pub fn masked_softmax_rows(&mut self, m: NodeId, mask: Vec<bool>) -> Result<NodeId> {
        self.record(Op::MaskedSoftmaxRows(m, mask))
    }

    pub fn activation(&mut self, x: NodeId, act: Activation) -> Result<NodeId> {
        if let Activation::LeakyRelu(slope) = act {
            if !(slope > 0.0) {
                return Err(Error::InvalidArgument(format!("leaky relu slope must be positive, got {slope}")));
            }
        }
        if act == Activation::Identity {
            return Ok(x);
        }
        self.record(Op::Activation(x, act))
    }

    pub fn global_avg_pool(&mut self, f: NodeId) -> Result<NodeId> {
        self.record(Op::GlobalAvgPool(f))
    }

    pub fn conv2d(&mut self, x: NodeId, k: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let xs = self.node(x)?.value.shape();
        let ks = self.node(k)?.value.shape();
        if xs.len() != 3 || ks.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("expected input [Cin,H,W] and kernel [Cout,Cin,kh,kw], got {xs:?} and {ks:?}"),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be at least 1".into()));
        }
        let (cin, h, w) = (xs[0], xs[1], xs[2]);
        let (cout, kcin, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
        if kcin != cin {
            return Err(Error::shape("conv2d", format!("input {xs:?} vs kernel {ks:?} channels")));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * pad, w + 2 * pad),
            ));
        }
        let geom = ConvGeometry {
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        };
        self.record(Op::Conv2d { x, k, geom })
    }

    /// `a · x + b` for a vector `x`.
    pub fn affine(&mut self, x: NodeId, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Affine { x, a, b })
    }

    /// Adds `b[c]` to every entry of channel `c` of a `[D,H,W]` map.
    pub fn add_channel_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::AddChannelBias { x, b })
    }

    /// Multiplies channel `c` of a `[D,H,W]` map by `g[c]`.
    pub fn channel_scale(&mut self, x: NodeId, g: NodeId) -> Result<NodeId> {
        self.record(Op::ChannelScale { x, g })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul(a, b))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: impl Into<Vec<usize>>) -> Result<NodeId> {
        self.record(Op::Reshape(a, shape.into()))
    }

    /// Flattens and concatenates the inputs into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.record(Op::Concat(parts.to_vec()))
    }

    /// Stacks equally sized inputs as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        self.record(Op::StackRows(rows.to_vec()))
    }

    /// `out[i][j] = u[i] + v[j]`.
    pub fn outer_sum(&mut self, u: NodeId, v: NodeId) -> Result<NodeId> {
        self.record(Op::OuterSum(u, v))
    }

    /// Binary cross-entropy on sigmoid probabilities clamped to `[eps, 1-eps]`,
    /// summed over labels and averaged over the rows of `logits`.
    pub fn bce_loss(&mut self, logits: NodeId, targets: &[f64], eps: f64) -> Result<NodeId> {
        if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::InvalidArgument("bce targets must be 0 or 1".into()));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidArgument(format!("bce epsilon {eps} outside (0, 0.5)")));
        }
        self.record(Op::BceLoss { logits, targets: targets.to_vec(), eps })
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        match op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::MatMul(a, b) | Op::MatMulCanonical(a, b) => {
                let canonical = matches!(op, Op::MatMulCanonical(..));
                let (a, b) = (v(a), v(b));
                if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
                    return Err(Error::shape(
                        "matmul",
                        format!("cannot multiply {:?} by {:?}", a.shape(), b.shape()),
                    ));
                }
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                let mut out = vec![0.0; m * n];
                if canonical {
                    kernels::matmul_canonical(a.data(), b.data(), &mut out, m, k, n);
                } else {
                    kernels::matmul_acc(a.data(), b.data(), &mut out, m, k, n);
                }
                Tensor::new([m, n], out)
            }
            Op::SoftmaxRows(a) => {
                let a = v(a);
                if a.rank() != 2 {
                    return Err(Error::shape("softmax_rows", format!("expected a matrix, got {:?}", a.shape())));
                }
                if !a.all_finite() {
                    return Err(Error::NonFinite("softmax_rows"));
                }
                let mut out = a.clone();
                let c = a.cols();
                for row in out.data_mut().chunks_mut(c) {
                    kernels::softmax_in_place(row);
                }
                Ok(out)
            }
            Op::MaskedSoftmaxRows(a, mask) => {
                let a = v(a);
                if a.rank() != 2 || mask.len() != a.len() {
                    return Err(Error::shape(
                        "masked_softmax_rows",
                        format!("matrix {:?} with mask of length {}", a.shape(), mask.len()),
                    ));
                }
                let c = a.cols();
                if mask.chunks(c).any(|row| !row.iter().any(|&m| m)) {
                    return Err(Error::InvalidArgument("masked softmax row with no admissible entry".into()));
                }
                if !a.all_finite() {
                    return Err(Error::NonFinite("masked_softmax_rows"));
                }
                let mut out = a.clone();
                for (row, m) in out.data_mut().chunks_mut(c).zip(mask.chunks(c)) {
                    kernels::masked_softmax_row(row, m);
                }
                Ok(out)
            }
            Op::Activation(a, act) => Ok(v(a).map(|x| act.apply(x))),
            Op::GlobalAvgPool(a) => {
                let a = v(a);
                if a.rank() != 3 {
                    return Err(Error::shape("global_avg_pool", format!("expected [D,w,h], got {:?}", a.shape())));
                }
                let d = a.shape()[0];
                let area = a.shape()[1] * a.shape()[2];
                let out = a
                    .data()
                    .chunks(area)
                    .map(|ch| ch.iter().sum::<f64>() / area as f64)
                    .collect();
                Tensor::new([d], out)
            }
            Op::Conv2d { x, k, geom } => {
                let mut out = vec![0.0; geom.cout * geom.ho * geom.wo];
                geom.forward(v(x).data(), v(k).data(), &mut out);
                Tensor::new([geom.cout, geom.ho, geom.wo], out)
            }
            Op::Affine { x, a, b } => {
                let (x, a, b) = (v(x), v(a), v(b));
                if x.rank() != 1 || a.rank() != 2 || b.rank() != 1 || a.cols() != x.len() || a.rows() != b.len() {
                    return Err(Error::shape(
                        "affine",
                        format!("x {:?}, A {:?}, b {:?}", x.shape(), a.shape(), b.shape()),
                    ));
                }
                let mut out = b.data().to_vec();
                kernels::matmul_acc(a.data(), x.data(), &mut out, a.rows(), a.cols(), 1);
                Tensor::new([b.len()], out)
            }
            Op::AddChannelBias { x, b } => {
                let (x, b) = (v(x), v(b));
                check_channelwise("add_channel_bias", x, b)?;
                let area = x.len() / b.len();
                let mut out = x.clone();
                for (ch, &bv) in out.data_mut().chunks_mut(area).zip(b.data()) {
                    ch.iter_mut().for_each(|o| *o += bv);
                }
                Ok(out)
            }
            Op::ChannelScale { x, g } => {
                let (x, g) = (v(x), v(g));
                check_channelwise("channel_scale", x, g)?;
                let area = x.len() / g.len();
                let mut out = x.clone();
                for (ch, &gv) in out.data_mut().chunks_mut(area).zip(g.data()) {
                    ch.iter_mut().for_each(|o| *o *= gv);
                }
                Ok(out)
            }
            Op::Add(a, b) | Op::Mul(a, b) => {
                let (a, b) = (v(a), v(b));
                if a.shape() != b.shape() {
                    return Err(Error::shape("elementwise", format!("{:?} vs {:?}", a.shape(), b.shape())));
                }
                let f: fn(f64, f64) -> f64 = if matches!(op, Op::Add(..)) { |x, y| x + y } else { |x, y| x * y };
                Tensor::new(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
            }
            Op::Sum(a) => Ok(Tensor::scalar(v(a).data().iter().sum())),
            Op::Reshape(a, shape) => v(a).clone().reshaped(shape.clone()),
            Op::Concat(ids) => {
                if ids.is_empty() {
                    return Err(Error::shape("concat", "no inputs"));
                }
                let data: Vec<f64> = ids.iter().flat_map(|id| v(id).data().iter().copied()).collect();
                Ok(Tensor::vector(data))
            }
            Op::StackRows(ids) => {
                let n = ids.first().map(|id| v(id).len()).ok_or_else(|| Error::shape("stack_rows", "no inputs"))?;
                if ids.iter().any(|id| v(id).len() != n) {
                    return Err(Error::shape("stack_rows", "rows of different lengths"));
                }
                let data: Vec<f64> = ids.iter().flat_map(|id| v(id).data().iter().copied()).collect();
                Tensor::new([ids.len(), n], data)
            }
            Op::OuterSum(u, w) => {
                let (u, w) = (v(u), v(w));
                let mut out = Vec::with_capacity(u.len() * w.len());
                for &a in u.data() {
                    out.extend(w.data().iter().map(|&b| a + b));
                }
                Tensor::new([u.len(), w.len()], out)
            }
            Op::BceLoss { logits, targets, eps } => {
                let z = v(logits);
                if z.rank() != 2 || z.len() != targets.len() {
                    return Err(Error::shape(
                        "bce_loss",
                        format!("logits {:?} vs {} targets", z.shape(), targets.len()),
                    ));
                }
                let mut total = 0.0;
                for (&zi, &y) in z.data().iter().zip(targets) {
                    let p = kernels::sigmoid(zi).clamp(*eps, 1.0 - eps);
                    total -= y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p);
                }
                Ok(Tensor::scalar(total / z.rows() as f64))
            }
        }
    }

    /// Scalar-loss convenience for [`DiffGraph::backward`] with seed 1.
    pub fn backward_scalar(&mut self, terminal: NodeId) -> Result<()> {
        self.backward(terminal, &Tensor::scalar(1.0))
    }

    /// Propagates `seed` from `terminal` back to every `param` leaf,
    /// accumulating into the leaf gradients.
    pub fn backward(&mut self, terminal: NodeId, seed: &Tensor) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("backward over an empty graph".into()));
        }
        let term = self.node(terminal)?;
        if term.value.shape() != seed.shape() {
            return Err(Error::shape(
                "backward",
                format!("seed {:?} vs terminal {:?}", seed.shape(), term.value.shape()),
            ));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; terminal.0 + 1];
        adj[terminal.0] = Some(seed.data().to_vec());

        for i in (0..=terminal.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            let node = &mut self.nodes[i];
            if node.requires_grad {
                node.grad.iter_mut().zip(&g).for_each(|(acc, d)| *acc += d);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |id: &NodeId| &nodes[id.0].value;
        let out = &nodes[i].value;

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) | Op::MatMulCanonical(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(da) = slot(nodes, adj, a) {
                    kernels::matmul_bt_acc(g, bv.data(), da, m, k, n);
                }
                if let Some(db) = slot(nodes, adj, b) {
                    kernels::matmul_at_acc(av.data(), g, db, m, k, n);
                }
            }
            Op::SoftmaxRows(a) | Op::MaskedSoftmaxRows(a, _) => {
                if let Some(da) = slot(nodes, adj, a) {
                    let c = out.cols();
                    for ((y, gy), dx) in out.data().chunks(c).zip(g.chunks(c)).zip(da.chunks_mut(c)) {
                        let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                        for ((d, &yj), &gj) in dx.iter_mut().zip(y).zip(gy) {
                            *d += yj * (gj - dot);
                        }
                    }
                }
            }
            Op::Activation(a, act) => {
                let x = val(a).data();
                if let Some(da) = slot(nodes, adj, a) {
                    for (((d, &xj), &yj), &gj) in da.iter_mut().zip(x).zip(out.data()).zip(g) {
                        *d += gj * act.derivative(xj, yj);
                    }
                }
            }
            Op::GlobalAvgPool(a) => {
                let area = val(a).len() / out.len();
                if let Some(da) = slot(nodes, adj, a) {
                    let scale = 1.0 / area as f64;
                    for (ch, &gc) in da.chunks_mut(area).zip(g) {
                        ch.iter_mut().for_each(|d| *d += gc * scale);
                    }
                }
            }
            Op::Conv2d { x, k, geom } => {
                let (xv, kv) = (val(x).data(), val(k).data());
                let mut dx = slot(nodes, adj, x).map(core::mem::take);
                let mut dk = slot(nodes, adj, k).map(core::mem::take);
                geom.backward(xv, kv, g, dx.as_deref_mut(), dk.as_deref_mut());
                if let Some(dx) = dx {
                    adj[x.0] = Some(dx);
                }
                if let Some(dk) = dk {
                    adj[k.0] = Some(dk);
                }
            }
            Op::Affine { x, a, b } => {
                let (xv, av) = (val(x), val(a));
                let (m, n) = (av.rows(), av.cols());
                if let Some(dx) = slot(nodes, adj, x) {
                    kernels::matmul_at_acc(av.data(), g, dx, m, n, 1);
                }
                if let Some(da) = slot(nodes, adj, a) {
                    kernels::matmul_bt_acc(g, xv.data(), da, m, n, 1);
                }
                if let Some(db) = slot(nodes, adj, b) {
                    db.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
            }
            Op::AddChannelBias { x, b } => {
                let area = out.len() / val(b).len();
                if let Some(dx) = slot(nodes, adj, x) {
                    dx.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
                if let Some(db) = slot(nodes, adj, b) {
                    for (d, ch) in db.iter_mut().zip(g.chunks(area)) {
                        *d += ch.iter().sum::<f64>();
                    }
                }
            }
            Op::ChannelScale { x, g: gate } => {
                let (xv, gv) = (val(x).data(), val(gate).data());
                let area = xv.len() / gv.len();
                if let Some(dx) = slot(nodes, adj, x) {
                    for ((dch, gch), &s) in dx.chunks_mut(area).zip(g.chunks(area)).zip(gv) {
                        dch.iter_mut().zip(gch).for_each(|(d, gy)| *d += gy * s);
                    }
                }
                if let Some(dg) = slot(nodes, adj, gate) {
                    for ((d, xch), gch) in dg.iter_mut().zip(xv.chunks(area)).zip(g.chunks(area)) {
                        *d += xch.iter().zip(gch).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = slot(nodes, adj, a) {
                    da.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
                if let Some(db) = slot(nodes, adj, b) {
                    db.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a).data(), val(b).data());
                if let Some(da) = slot(nodes, adj, a) {
                    for ((d, gv), y) in da.iter_mut().zip(g).zip(bv) {
                        *d += gv * y;
                    }
                }
                if let Some(db) = slot(nodes, adj, b) {
                    for ((d, gv), x) in db.iter_mut().zip(g).zip(av) {
                        *d += gv * x;
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = slot(nodes, adj, a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Reshape(a, _) => {
                if let Some(da) = slot(nodes, adj, a) {
                    da.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
            }
            Op::Concat(ids) | Op::StackRows(ids) => {
                let mut offset = 0;
                for id in ids {
                    let len = val(id).len();
                    if let Some(d) = slot(nodes, adj, id) {
                        d.iter_mut().zip(&g[offset..offset + len]).for_each(|(d, gv)| *d += gv);
                    }
                    offset += len;
                }
            }
            Op::OuterSum(u, w) => {
                let m = val(w).len();
                if let Some(du) = slot(nodes, adj, u) {
                    for (d, row) in du.iter_mut().zip(g.chunks(m)) {
                        *d += row.iter().sum::<f64>();
                    }
                }
                if let Some(dw) = slot(nodes, adj, w) {
                    for row in g.chunks(m) {
                        dw.iter_mut().zip(row).for_each(|(d, gv)| *d += gv);
                    }
                }
            }
            Op::BceLoss { logits, targets, eps } => {
                let z = val(logits);
                let batch = z.rows() as f64;
                if let Some(dz) = slot(nodes, adj, logits) {
                    for ((d, &zi), &y) in dz.iter_mut().zip(z.data()).zip(targets) {
                        let p = kernels::sigmoid(zi);
                        // clamped probabilities are flat in the logit
                        if p > *eps && p < 1.0 - eps {
                            *d += g[0] * (p - y) / batch;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint buffer of `id` when it takes part in differentiation.
fn slot<'a>(nodes: &[Node], adj: &'a mut [Option<Vec<f64>>], id: &NodeId) -> Option<&'a mut Vec<f64>> {
    if !nodes[id.0].needs_grad {
        return None;
    }
    let len = nodes[id.0].value.len();
    Some(adj[id.0].get_or_insert_with(|| vec![0.0; len]))
}

fn check_channelwise(op: &'static str, x: &Tensor, per_channel: &Tensor) -> Result<()> {
    if x.rank() != 3 || per_channel.rank() != 1 || x.shape()[0] != per_channel.len() {
        return Err(Error::shape(
            op,
            format!("map {:?} with per-channel vector {:?}", x.shape(), per_channel.shape()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = DiffGraph::new();
        let a = g.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let i = g.constant(Tensor::identity(2));
        let b = g.constant(mat(&[&[5.0], &[6.0]]));
        let ai = g.matmul(a, i).unwrap();
        assert_eq!(g.value(ai).data(), &[1.0, 2.0, 3.0, 4.0]);
        let ab = g.matmul(a, b).unwrap();
        assert_eq!(g.value(ab).data(), &[17.0, 39.0]);
        assert_eq!(g.value(ab).shape(), &[2, 1]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = DiffGraph::new();
        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_backward_row_vector() {
        let mut g = DiffGraph::new();
        let a = g.param(mat(&[&[1.0, 2.0]]));
        let b = g.constant(mat(&[&[3.0], &[4.0]]));
        let y = g.matmul(a, b).unwrap();
        g.backward(y, &Tensor::new([1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.grad(a), &[3.0, 4.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut g = DiffGraph::new();
        let m = g.constant(mat(&[&[0.0, 0.0, 0.0], &[libm::log(2.0), 0.0, 0.0]]));
        let s = g.softmax_rows(m).unwrap();
        let v = g.value(s).data();
        for x in &v[..3] {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((v[3] - 0.5).abs() < 1e-15);
        assert!((v[4] - 0.25).abs() < 1e-15);
        assert!((v[5] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let mut g = DiffGraph::new();
        let m = g.constant(mat(&[&[f64::NAN, 0.0]]));
        assert_eq!(g.softmax_rows(m), Err(Error::NonFinite("softmax_rows")));
    }

    #[test]
    fn activation_examples() {
        let mut g = DiffGraph::new();
        let x = g.constant(Tensor::vector(vec![5.0, -2.0, 0.0]));
        let l = g.activation(x, Activation::LeakyRelu(0.01)).unwrap();
        assert_eq!(g.value(l).data()[..2], [5.0, -0.02]);
        let s = g.activation(x, Activation::Sigmoid).unwrap();
        assert_eq!(g.value(s).data()[2], 0.5);
        assert!(g.activation(x, Activation::LeakyRelu(0.0)).is_err());
    }

    #[test]
    fn global_avg_pool_examples() {
        let mut g = DiffGraph::new();
        let f = g.constant(Tensor::new([2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 7.0, 7.0, 7.0, 7.0]).unwrap());
        let p = g.global_avg_pool(f).unwrap();
        assert_eq!(g.value(p).data(), &[2.5, 7.0]);
        let one = g.constant(Tensor::new([3, 1, 1], vec![1.0, -2.0, 3.0]).unwrap());
        let q = g.global_avg_pool(one).unwrap();
        assert_eq!(g.value(q).data(), &[1.0, -2.0, 3.0]);
        let flat = g.constant(Tensor::zeros([3, 4]));
        assert!(matches!(g.global_avg_pool(flat), Err(Error::Shape { .. })));
    }

    #[test]
    fn conv2d_examples() {
        let mut g = DiffGraph::new();
        let x = g.constant(Tensor::new([1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let k = g.constant(Tensor::new([1, 1, 1, 1], vec![1.0]).unwrap());
        let y = g.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));

        let ones = g.constant(Tensor::filled([1, 5, 5], 1.0));
        let k3 = g.constant(Tensor::filled([1, 1, 3, 3], 1.0));
        let y = g.conv2d(ones, k3, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 3, 3]);
        assert_eq!(g.value(y).data()[4], 9.0);

        let x8 = g.constant(Tensor::zeros([2, 8, 8]));
        let k8 = g.constant(Tensor::zeros([4, 2, 3, 3]));
        let y = g.conv2d(x8, k8, 2, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[4, 4, 4]);

        let small = g.constant(Tensor::zeros([1, 2, 2]));
        assert!(matches!(g.conv2d(small, k3, 1, 0), Err(Error::Shape { .. })));
    }

    #[test]
    fn affine_examples() {
        let mut g = DiffGraph::new();
        let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let a = g.constant(mat(&[&[1.0, 1.0], &[0.0, 2.0]]));
        let b = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let y = g.affine(x, a, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0]);
        let i = g.constant(Tensor::identity(2));
        let z = g.constant(Tensor::zeros([2]));
        let y = g.affine(x, i, z).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
        let bad = g.constant(Tensor::zeros([3]));
        assert!(g.affine(x, a, bad).is_err());
    }

    #[test]
    fn no_params_means_no_gradients() {
        let mut g = DiffGraph::new();
        let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward_scalar(s).unwrap();
        assert_eq!(g.grad(x), &[0.0, 0.0]);
    }

    #[test]
    fn sum_of_squares_and_accumulation() {
        let mut g = DiffGraph::new();
        let x = g.param(Tensor::vector(vec![1.5, -2.0, 0.25]));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward_scalar(s).unwrap();
        assert_eq!(g.grad(x), &[3.0, -4.0, 0.5]);
        g.backward_scalar(s).unwrap();
        assert_eq!(g.grad(x), &[6.0, -8.0, 1.0]);
        g.zero_grad();
        assert_eq!(g.grad(x), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_errors() {
        let mut g = DiffGraph::new();
        assert!(g.backward_scalar(NodeId(0)).is_err());
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward_scalar(x), Err(Error::Shape { .. })));
        assert_eq!(g.backward_scalar(NodeId(7)), Err(Error::UnknownNode(7)));
    }

    #[test]
    fn replay_is_bit_identical_and_tracks_leaves() {
        let mut g = DiffGraph::new();
        let x = g.param(Tensor::vector(vec![0.3, -0.7]));
        let a = g.param(mat(&[&[1.0, 2.0], &[0.5, -1.0]]));
        let b = g.param(Tensor::vector(vec![0.1, 0.2]));
        let y = g.affine(x, a, b).unwrap();
        let s = g.activation(y, Activation::Sigmoid).unwrap();
        let before = g.value(s).clone();
        g.replay().unwrap();
        assert_eq!(g.value(s), &before);
        g.set_leaf(x, Tensor::vector(vec![0.0, 0.0])).unwrap();
        g.replay().unwrap();
        assert_eq!(g.value(y).data(), &[0.1, 0.2]);
        assert!(g.set_leaf(y, Tensor::vector(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn bce_values() {
        let mut g = DiffGraph::new();
        let z = g.constant(Tensor::zeros([2, 3]));
        let l = g.bce_loss(z, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0], 1e-7).unwrap();
        assert!((g.value(l).data()[0] - 3.0 * libm::log(2.0)).abs() < 1e-12);
        assert!(g.bce_loss(z, &[2.0, 0.0, 1.0, 0.0, 0.0, 1.0], 1e-7).is_err());
    }

    #[test]
    fn records_are_topological() {
        let mut g = DiffGraph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let y = g.outer_sum(x, x).unwrap();
        let s = g.softmax_rows(y).unwrap();
        let t = g.sum(s).unwrap();
        for i in 0..g.len() {
            for input in g.inputs(NodeId(i)) {
                assert!(input.index() < i);
            }
        }
        assert_eq!(g.op_kind(t), OpKind::Sum);
    }
}
