//! Reverse-mode automatic differentiation over whole-tensor operations.
//!
//! A [`Tape`] is an append-only arena of nodes. Every operation validates its
//! shapes, computes the forward value eagerly and records which inputs it
//! read, so node inputs always reference earlier nodes and the list is in
//! topological order by construction. [`Tape::backward`] walks the list in
//! reverse once, accumulating vector-Jacobian products, and then freezes the
//! tape.
//!
//! Matrices are row-major 2-D tensors. Ops that need per-element saved state
//! (activations, softmax) keep their own output, which the arena already owns.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{matmul_raw, Tensor};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// a [m x k] * b [k x n]
    MatMul { a: NodeId, b: NodeId, m: usize, k: usize, n: usize },
    /// elementwise, same shape
    Add { a: NodeId, b: NodeId },
    /// a [m x n] + row [1 x n] broadcast over rows
    AddRow { a: NodeId, row: NodeId },
    /// elementwise product, same shape
    Mul { a: NodeId, b: NodeId },
    /// constant scalar multiple
    Scale { a: NodeId, c: f64 },
    Tanh { a: NodeId },
    Sigmoid { a: NodeId },
    /// horizontal concatenation of equal-row-count blocks
    ConcatCols { parts: Vec<NodeId> },
    /// vertical concatenation of equal-col-count blocks
    ConcatRows { parts: Vec<NodeId> },
    /// column range [from, to) of a
    SliceCols { a: NodeId, from: usize, to: usize },
    /// rows of a selected by index, in order (duplicates allowed)
    GatherRows { a: NodeId, indices: Vec<usize> },
    /// same data, new shape
    Reshape { a: NodeId },
    /// softmax over each row independently
    SoftmaxRows { a: NodeId },
    /// fused softmax + cross-entropy, mean over unmasked rows
    SoftmaxXent { logits: NodeId, targets: Vec<usize>, mask: Vec<bool>, active: usize },
    /// sum of all entries
    Sum { a: NodeId },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Gradients of one backward pass, keyed by the node they belong to.
#[derive(Debug, Default)]
pub struct GradientMap {
    grads: HashMap<NodeId, Vec<f64>>,
}

impl GradientMap {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(&id).map(|g| g.as_slice())
    }

    /// Gradient for a tracked leaf; tracked leaves that never reached the
    /// loss still get an all-zero gradient.
    pub fn expect(&self, id: NodeId) -> &[f64] {
        self.get(id).expect("node was not registered as a tracked leaf")
    }

    /// Stores the gradient into a tensor registered via [`Tape::register`].
    pub fn write_back(&self, t: &mut Tensor) -> Result<()> {
        let id = t
            .tape_id
            .ok_or_else(|| Error::contract("tensor was never registered on a tape".to_string()))?;
        let grad = self.get(id).ok_or_else(|| {
            Error::contract("no gradient recorded for this tensor's node".to_string())
        })?;
        t.grad = Some(grad.to_vec());
        Ok(())
    }
}

/// Append-only record of tensor operations for one forward/backward cycle.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    frozen: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Registers a differentiable leaf (a parameter).
    pub fn param(&mut self, t: &Tensor) -> Result<NodeId> {
        self.push_leaf(t, true)
    }

    /// Registers a differentiable leaf and stamps the tensor with its node
    /// handle, so a later [`GradientMap::write_back`] can find it.
    pub fn register(&mut self, t: &mut Tensor) -> Result<NodeId> {
        let id = self.push_leaf(t, true)?;
        t.tape_id = Some(id);
        Ok(id)
    }

    /// Registers a constant leaf; no gradient is accumulated for it.
    pub fn constant(&mut self, t: &Tensor) -> Result<NodeId> {
        self.push_leaf(t, false)
    }

    fn push_leaf(&mut self, t: &Tensor, requires_grad: bool) -> Result<NodeId> {
        self.check_open()?;
        Ok(self.push(Node {
            op: Op::Leaf,
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            requires_grad,
        }))
    }

    fn check_open(&self) -> Result<()> {
        if self.frozen {
            return Err(Error::state("tape is frozen after backward; build a new tape".to_string()));
        }
        Ok(())
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Forward value of a scalar (1-element) node.
    pub fn scalar_value(&self, id: NodeId) -> Result<f64> {
        let n = &self.nodes[id.0];
        if n.value.len() != 1 {
            return Err(Error::contract(format!(
                "expected a scalar node, got shape {:?}",
                n.shape
            )));
        }
        Ok(n.value[0])
    }

    fn dims2(&self, id: NodeId) -> (usize, usize) {
        let s = &self.nodes[id.0].shape;
        match s.len() {
            1 => (1, s[0]),
            _ => (s[0], s[1..].iter().product()),
        }
    }

    // ── forward ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_open()?;
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        if k != k2 {
            return Err(Error::dimension(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value = matmul_raw(self.value(a), self.value(b), m, k, n);
        Ok(self.push(Node {
            op: Op::MatMul { a, b, m, k, n },
            shape: vec![m, n],
            value,
            requires_grad: false,
        }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_open()?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension(format!(
                "add expects identical shapes: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Node { op: Op::Add { a, b }, shape, value, requires_grad: false }))
    }

    /// `a [m x n] + row [1 x n]`, broadcasting the row over every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_open()?;
        let (m, n) = self.dims2(a);
        let (rm, rn) = self.dims2(row);
        if rm != 1 || rn != n {
            return Err(Error::dimension(format!(
                "add_row expects a [1 x {n}] row for operand {:?}, got {:?}",
                self.shape(a),
                self.shape(row)
            )));
        }
        let mut value = self.value(a).to_vec();
        let r = self.value(row);
        for i in 0..m {
            for j in 0..n {
                value[i * n + j] += r[j];
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Node { op: Op::AddRow { a, row }, shape, value, requires_grad: false }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_open()?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension(format!(
                "mul expects identical shapes: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Node { op: Op::Mul { a, b }, shape, value, requires_grad: false }))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.check_open()?;
        let value: Vec<f64> = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Node { op: Op::Scale { a, c }, shape, value, requires_grad: false }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let neg = self.scale(b, -1.0)?;
        self.add(a, neg)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_open()?;
        let value: Vec<f64> = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Node { op: Op::Tanh { a }, shape, value, requires_grad: false }))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_open()?;
        let value: Vec<f64> =
            self.value(a).iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Node { op: Op::Sigmoid { a }, shape, value, requires_grad: false }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.check_open()?;
        if parts.is_empty() {
            return Err(Error::contract("concat_cols of zero parts".to_string()));
        }
        let (m, _) = self.dims2(parts[0]);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.dims2(p);
            if pm != m {
                return Err(Error::dimension(format!(
                    "concat_cols row counts disagree: {:?} vs {:?}",
                    self.shape(parts[0]),
                    self.shape(p)
                )));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut value = vec![0.0; m * total];
        let mut col = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p);
            for i in 0..m {
                value[i * total + col..i * total + col + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            col += w;
        }
        Ok(self.push(Node {
            op: Op::ConcatCols { parts: parts.to_vec() },
            shape: vec![m, total],
            value,
            requires_grad: false,
        }))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.check_open()?;
        if parts.is_empty() {
            return Err(Error::contract("concat_rows of zero parts".to_string()));
        }
        let (_, n) = self.dims2(parts[0]);
        let mut value = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (pm, pn) = self.dims2(p);
            if pn != n {
                return Err(Error::dimension(format!(
                    "concat_rows column counts disagree: {:?} vs {:?}",
                    self.shape(parts[0]),
                    self.shape(p)
                )));
            }
            value.extend_from_slice(self.value(p));
            rows += pm;
        }
        Ok(self.push(Node {
            op: Op::ConcatRows { parts: parts.to_vec() },
            shape: vec![rows, n],
            value,
            requires_grad: false,
        }))
    }

    pub fn slice_cols(&mut self, a: NodeId, from: usize, to: usize) -> Result<NodeId> {
        self.check_open()?;
        let (m, n) = self.dims2(a);
        if from >= to || to > n {
            return Err(Error::dimension(format!(
                "slice_cols [{from}, {to}) out of range for {:?}",
                self.shape(a)
            )));
        }
        let w = to - from;
        let src = self.value(a);
        let mut value = vec![0.0; m * w];
        for i in 0..m {
            value[i * w..(i + 1) * w].copy_from_slice(&src[i * n + from..i * n + to]);
        }
        Ok(self.push(Node {
            op: Op::SliceCols { a, from, to },
            shape: vec![m, w],
            value,
            requires_grad: false,
        }))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.check_open()?;
        let (m, n) = self.dims2(a);
        if indices.is_empty() {
            return Err(Error::contract("gather_rows with no indices".to_string()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::dimension(format!(
                "gather_rows index {bad} out of range for {:?}",
                self.shape(a)
            )));
        }
        let src = self.value(a);
        let mut value = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            value.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        Ok(self.push(Node {
            op: Op::GatherRows { a, indices: indices.to_vec() },
            shape: vec![indices.len(), n],
            value,
            requires_grad: false,
        }))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.check_open()?;
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() {
            return Err(Error::dimension(format!(
                "reshape to {:?} incompatible with {:?}",
                shape,
                self.shape(a)
            )));
        }
        let value = self.value(a).to_vec();
        Ok(self.push(Node { op: Op::Reshape { a }, shape, value, requires_grad: false }))
    }

    /// Softmax applied independently to every row, with max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_open()?;
        let (m, n) = self.dims2(a);
        if n == 0 {
            return Err(Error::dimension("softmax of an empty row".to_string()));
        }
        let src = self.value(a);
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("softmax input contains a non-finite entry".to_string()));
        }
        let mut value = vec![0.0; m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                value[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                value[i * n + j] /= sum;
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Node { op: Op::SoftmaxRows { a }, shape, value, requires_grad: false }))
    }

    /// Fused softmax + cross-entropy over a `[T x V]` logit matrix.
    ///
    /// Returns a scalar node holding the sum of per-row `-log softmax(logits)[target]`
    /// over unmasked rows, divided by the number of unmasked rows. The gradient is
    /// the standard `(softmax - onehot) / n_unmasked` on unmasked rows and exactly
    /// zero elsewhere.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<NodeId> {
        self.check_open()?;
        let (t, v) = self.dims2(logits);
        if targets.len() != t || mask.len() != t {
            return Err(Error::dimension(format!(
                "cross-entropy lengths disagree: {t} logit rows, {} targets, {} mask entries",
                targets.len(),
                mask.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= v) {
            return Err(Error::dimension(format!(
                "target id {bad} out of range for vocabulary of {v}"
            )));
        }
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::contract(
                "cross-entropy over an entirely masked sequence".to_string(),
            ));
        }
        let src = self.value(logits);
        let mut total = 0.0;
        for i in 0..t {
            if !mask[i] {
                continue;
            }
            let row = &src[i * v..(i + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[targets[i]];
        }
        let value = vec![total / active as f64];
        Ok(self.push(Node {
            op: Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                active,
            },
            shape: vec![1],
            value,
            requires_grad: false,
        }))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_open()?;
        let value = vec![self.value(a).iter().sum()];
        Ok(self.push(Node { op: Op::Sum { a }, shape: vec![1], value, requires_grad: false }))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Freezes the tape; a second call is
    /// a state error. Returns gradients for every tracked leaf.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradientMap> {
        if self.frozen {
            return Err(Error::state("backward called twice on the same tape".to_string()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        self.frozen = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            // Leaf gradients are kept; interior gradients are consumed here.
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul { a, b, m, k, n } => {
                    // dA += dC * B^T, dB += A^T * dC
                    {
                        let bv = &self.nodes[b.0].value;
                        let da = self.grad_slot(&mut grads, a);
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i * n + j] * bv[p * n + j];
                                }
                                da[i * k + p] += s;
                            }
                        }
                    }
                    {
                        let av = &self.nodes[a.0].value;
                        let db = self.grad_slot(&mut grads, b);
                        for p in 0..k {
                            for i in 0..m {
                                let av_ip = av[i * k + p];
                                if av_ip == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    db[p * n + j] += av_ip * g[i * n + j];
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut grads, a, &g);
                    self.accumulate(&mut grads, b, &g);
                }
                Op::AddRow { a, row } => {
                    self.accumulate(&mut grads, a, &g);
                    let (m, n) = self.dims2(a);
                    let dr = self.grad_slot(&mut grads, row);
                    for i in 0..m {
                        for j in 0..n {
                            dr[j] += g[i * n + j];
                        }
                    }
                }
                Op::Mul { a, b } => {
                    {
                        let bv = self.nodes[b.0].value.clone();
                        let da = self.grad_slot(&mut grads, a);
                        for ((d, &gv), &bvv) in da.iter_mut().zip(&g).zip(&bv) {
                            *d += gv * bvv;
                        }
                    }
                    {
                        let av = self.nodes[a.0].value.clone();
                        let db = self.grad_slot(&mut grads, b);
                        for ((d, &gv), &avv) in db.iter_mut().zip(&g).zip(&av) {
                            *d += gv * avv;
                        }
                    }
                }
                Op::Scale { a, c } => {
                    let da = self.grad_slot(&mut grads, a);
                    for (d, &gv) in da.iter_mut().zip(&g) {
                        *d += c * gv;
                    }
                }
                Op::Tanh { a } => {
                    let y = self.nodes[idx].value.clone();
                    let da = self.grad_slot(&mut grads, a);
                    for ((d, &gv), &yv) in da.iter_mut().zip(&g).zip(&y) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
                Op::Sigmoid { a } => {
                    let y = self.nodes[idx].value.clone();
                    let da = self.grad_slot(&mut grads, a);
                    for ((d, &gv), &yv) in da.iter_mut().zip(&g).zip(&y) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
                Op::ConcatCols { parts } => {
                    let (m, total) = self.dims2(NodeId(idx));
                    let mut col = 0;
                    for &p in &parts {
                        let (_, w) = self.dims2(p);
                        let dp = self.grad_slot(&mut grads, p);
                        for i in 0..m {
                            for j in 0..w {
                                dp[i * w + j] += g[i * total + col + j];
                            }
                        }
                        col += w;
                    }
                }
                Op::ConcatRows { parts } => {
                    let mut offset = 0;
                    for &p in &parts {
                        let len = self.nodes[p.0].value.len();
                        let dp = self.grad_slot(&mut grads, p);
                        for (d, &gv) in dp.iter_mut().zip(&g[offset..offset + len]) {
                            *d += gv;
                        }
                        offset += len;
                    }
                }
                Op::SliceCols { a, from, to } => {
                    let (m, n) = self.dims2(a);
                    let w = to - from;
                    let da = self.grad_slot(&mut grads, a);
                    for i in 0..m {
                        for j in 0..w {
                            da[i * n + from + j] += g[i * w + j];
                        }
                    }
                }
                Op::GatherRows { a, indices } => {
                    let (_, n) = self.dims2(a);
                    let da = self.grad_slot(&mut grads, a);
                    for (r, &i) in indices.iter().enumerate() {
                        for j in 0..n {
                            da[i * n + j] += g[r * n + j];
                        }
                    }
                }
                Op::Reshape { a } => {
                    self.accumulate(&mut grads, a, &g);
                }
                Op::SoftmaxRows { a } => {
                    // dx = y * (dy - sum(dy * y)) per row
                    let (m, n) = self.dims2(a);
                    let y = self.nodes[idx].value.clone();
                    let da = self.grad_slot(&mut grads, a);
                    for i in 0..m {
                        let yrow = &y[i * n..(i + 1) * n];
                        let grow = &g[i * n..(i + 1) * n];
                        let dot: f64 = yrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            da[i * n + j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
                Op::SoftmaxXent { logits, targets, mask, active } => {
                    let (t, v) = self.dims2(logits);
                    let src = self.nodes[logits.0].value.clone();
                    let gscalar = g[0] / active as f64;
                    let dl = self.grad_slot(&mut grads, logits);
                    for i in 0..t {
                        if !mask[i] {
                            continue;
                        }
                        let row = &src[i * v..(i + 1) * v];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
                        let sum: f64 = exps.iter().sum();
                        for e in &mut exps {
                            *e /= sum;
                        }
                        for j in 0..v {
                            let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                            dl[i * v + j] += gscalar * (exps[j] - onehot);
                        }
                    }
                }
                Op::Sum { a } => {
                    let da = self.grad_slot(&mut grads, a);
                    for d in da.iter_mut() {
                        *d += g[0];
                    }
                }
            }
        }

        let mut map = GradientMap::default();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad {
                let g = grads[i].take().unwrap_or_else(|| vec![0.0; node.value.len()]);
                map.grads.insert(NodeId(i), g);
            }
        }
        Ok(map)
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], id: NodeId, g: &[f64]) {
        let slot =
            grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.len()]);
        for (d, &gv) in slot.iter_mut().zip(g) {
            *d += gv;
        }
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], id: NodeId) -> &'g mut Vec<f64> {
        grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.len()])
    }
}
