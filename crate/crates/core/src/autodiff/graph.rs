//! Tape of vector-valued operations with reverse-mode gradients.
//!
//! Every node is a dense 1-D value; scalars are length-1 vectors. Matrices only
//! appear as parameters, read directly from the [`ParamStore`] the graph
//! borrows, so building a graph never copies weight tensors.

use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Category of a recorded operation, used to inject faults into one backward
/// rule when exercising the verification harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Param,
    Gather,
    MeanGather,
    Affine,
    Add,
    Sub,
    Mul,
    Scale,
    Sum,
    Mean,
    Concat,
    Sigmoid,
    Relu,
    Dot,
    Softmax,
    WeightedSum,
    Mask,
    LogSumExp,
    BinaryCrossEntropy,
    Normalize,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Gather { table: ParamId, row: usize },
    MeanGather { table: ParamId, rows: Vec<usize> },
    Affine { w: ParamId, x: NodeId, b: Option<ParamId> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(Vec<NodeId>),
    Mean(Vec<NodeId>),
    Concat(Vec<NodeId>),
    Sigmoid(NodeId),
    Relu(NodeId),
    Dot(NodeId, NodeId),
    Softmax(NodeId),
    WeightedSum { weights: NodeId, values: Vec<NodeId> },
    Mask { input: NodeId, mask: Vec<f64> },
    LogSumExp(NodeId),
    BinaryCrossEntropy { prob: NodeId, label: f64, eps: f64 },
    Normalize(NodeId),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::Gather { .. } => OpKind::Gather,
            Op::MeanGather { .. } => OpKind::MeanGather,
            Op::Affine { .. } => OpKind::Affine,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::Concat(_) => OpKind::Concat,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Relu(_) => OpKind::Relu,
            Op::Dot(..) => OpKind::Dot,
            Op::Softmax(_) => OpKind::Softmax,
            Op::WeightedSum { .. } => OpKind::WeightedSum,
            Op::Mask { .. } => OpKind::Mask,
            Op::LogSumExp(_) => OpKind::LogSumExp,
            Op::BinaryCrossEntropy { .. } => OpKind::BinaryCrossEntropy,
            Op::Normalize(_) => OpKind::Normalize,
        }
    }
}

/// A node: forward data, accumulated gradient and the operation that made it.
#[derive(Debug, Clone)]
pub struct Value {
    data: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

impl Value {
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Gradient of the last backward pass; empty if the node was not reached.
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn kind(&self) -> OpKind {
        self.op.kind()
    }
}

/// Records a computation over a borrowed parameter store.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Value>,
    fault: Option<OpKind>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Makes the backward rule of `kind` propagate a wrong (scaled) gradient.
    /// Only meant for checking that gradient verification catches faults.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total number of scalar outputs produced so far.
    pub fn scalar_outputs(&self) -> usize {
        self.nodes.iter().map(Value::len).sum()
    }

    pub fn node(&self, id: NodeId) -> &Value {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "node is not a scalar");
        v[0]
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, data: Vec<f64>, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Value {
            data,
            grad: Vec::new(),
            op,
        });
        id
    }

    fn same_len(&self, a: NodeId, b: NodeId) -> usize {
        let (la, lb) = (self.nodes[a.0].len(), self.nodes[b.0].len());
        assert_eq!(la, lb, "shape mismatch: {la} vs {lb}");
        la
    }

    /// Constant leaf.
    pub fn input(&mut self, data: Vec<f64>) -> NodeId {
        self.push(data, Op::Input)
    }

    /// A whole parameter as a flat vector node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let data = self.params.get(id).data().to_vec();
        self.push(data, Op::Param(id))
    }

    /// Row `row` of an embedding table.
    pub fn gather(&mut self, table: ParamId, row: usize) -> NodeId {
        let t = self.params.get(table);
        assert!(row < t.rows(), "index {row} out of range for {} rows", t.rows());
        let data = t.row(row).to_vec();
        self.push(data, Op::Gather { table, row })
    }

    /// Arithmetic mean of a non-empty set of table rows.
    pub fn mean_gather(&mut self, table: ParamId, rows: &[usize]) -> NodeId {
        assert!(!rows.is_empty(), "mean over an empty index set");
        let t = self.params.get(table);
        let mut data = vec![0.0; t.cols()];
        for &r in rows {
            assert!(r < t.rows(), "index {r} out of range for {} rows", t.rows());
            add_into(&mut data, t.row(r));
        }
        let inv = 1.0 / rows.len() as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        self.push(
            data,
            Op::MeanGather {
                table,
                rows: rows.to_vec(),
            },
        )
    }

    /// `W x + b` for a parameter matrix `W` of shape `[m, n]`.
    pub fn affine(&mut self, w: ParamId, x: NodeId, b: Option<ParamId>) -> NodeId {
        let wp = self.params.get(w);
        let (m, n) = (wp.rows(), wp.cols());
        let xv = &self.nodes[x.0].data;
        assert_eq!(xv.len(), n, "affine: W has {n} columns, x has {}", xv.len());
        let mut y = match b {
            Some(b) => {
                let bp = self.params.get(b).data();
                assert_eq!(bp.len(), m, "affine: bias length {} != {m}", bp.len());
                bp.to_vec()
            }
            None => vec![0.0; m],
        };
        let wd = wp.data();
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &wd[i * n..(i + 1) * n];
            *yi += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        self.push(y, Op::Affine { w, x, b })
    }

    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> NodeId {
        self.affine(w, x, None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b);
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        self.push(data, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b);
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        self.push(data, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b);
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        self.push(data, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let data = self.nodes[a.0].data.iter().map(|x| x * factor).collect();
        self.push(data, Op::Scale(a, factor))
    }

    /// Elementwise sum of equally sized nodes.
    pub fn sum(&mut self, items: &[NodeId]) -> NodeId {
        assert!(!items.is_empty(), "sum of no nodes");
        let n = self.nodes[items[0].0].len();
        let mut data = vec![0.0; n];
        for &i in items {
            assert_eq!(self.nodes[i.0].len(), n, "sum: shape mismatch");
            add_into(&mut data, &self.nodes[i.0].data);
        }
        self.push(data, Op::Sum(items.to_vec()))
    }

    /// Elementwise mean of equally sized nodes.
    pub fn mean(&mut self, items: &[NodeId]) -> NodeId {
        assert!(!items.is_empty(), "mean of no nodes");
        let n = self.nodes[items[0].0].len();
        let mut data = vec![0.0; n];
        for &i in items {
            assert_eq!(self.nodes[i.0].len(), n, "mean: shape mismatch");
            add_into(&mut data, &self.nodes[i.0].data);
        }
        let inv = 1.0 / items.len() as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        self.push(data, Op::Mean(items.to_vec()))
    }

    pub fn concat(&mut self, items: &[NodeId]) -> NodeId {
        let mut data = Vec::with_capacity(items.iter().map(|i| self.nodes[i.0].len()).sum());
        for &i in items {
            data.extend_from_slice(&self.nodes[i.0].data);
        }
        self.push(data, Op::Concat(items.to_vec()))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0].data.iter().map(|&x| sigmoid(x)).collect();
        self.push(data, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0].data.iter().map(|&x| x.max(0.0)).collect();
        self.push(data, Op::Relu(a))
    }

    /// Inner product, producing a scalar node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b);
        let s = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .sum();
        self.push(vec![s], Op::Dot(a, b))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].data;
        assert!(!x.is_empty(), "softmax over an empty vector");
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut data: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = data.iter().sum();
        data.iter_mut().for_each(|v| *v /= z);
        self.push(data, Op::Softmax(a))
    }

    /// `Σ_i weights[i] · values[i]`.
    pub fn weighted_sum(&mut self, weights: NodeId, values: &[NodeId]) -> NodeId {
        let w = &self.nodes[weights.0].data;
        assert_eq!(w.len(), values.len(), "weighted_sum: {} weights, {} values", w.len(), values.len());
        assert!(!values.is_empty(), "weighted_sum of no values");
        let n = self.nodes[values[0].0].len();
        let mut data = vec![0.0; n];
        for (wi, &v) in w.iter().zip(values) {
            let vd = &self.nodes[v.0].data;
            assert_eq!(vd.len(), n, "weighted_sum: shape mismatch");
            for (d, x) in data.iter_mut().zip(vd) {
                *d += wi * x;
            }
        }
        self.push(
            data,
            Op::WeightedSum {
                weights,
                values: values.to_vec(),
            },
        )
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`. In
    /// evaluation mode, or with `rate == 0`, the input node is returned as is.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, rate: f64, train: bool, rng: &mut R) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1), got {rate}");
        if !train || rate == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.nodes[x.0].len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = self.nodes[x.0]
            .data
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        self.push(data, Op::Mask { input: x, mask })
    }

    /// Stable `log Σ exp(x_i)`, producing a scalar node.
    pub fn log_sum_exp(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].data;
        assert!(!x.is_empty(), "log_sum_exp over an empty vector");
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = x.iter().map(|v| (v - m).exp()).sum();
        self.push(vec![m + s.ln()], Op::LogSumExp(a))
    }

    /// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped to `[eps, 1 - eps]`.
    pub fn binary_cross_entropy(&mut self, prob: NodeId, label: f64, eps: f64) -> NodeId {
        let p = self.scalar(prob).clamp(eps, 1.0 - eps);
        let loss = -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
        self.push(vec![loss], Op::BinaryCrossEntropy { prob, label, eps })
    }

    /// `x / ‖x‖`; the zero vector maps to zero.
    pub fn normalize(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].data;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let data = if norm > 0.0 {
            x.iter().map(|v| v / norm).collect()
        } else {
            vec![0.0; x.len()]
        };
        self.push(data, Op::Normalize(a))
    }

    fn accumulate(&mut self, id: NodeId, g: &[f64]) {
        let node = &mut self.nodes[id.0];
        if node.grad.is_empty() {
            node.grad = vec![0.0; node.data.len()];
        }
        add_into(&mut node.grad, g);
    }

    /// Back-propagates from the scalar node `loss`, filling node gradients and
    /// returning parameter gradients.
    ///
    /// Nodes are recorded in topological order, so a single reverse sweep
    /// visits each reachable node once; contributions along shared subgraphs
    /// add up.
    pub fn backward(&mut self, loss: NodeId) -> Gradients {
        assert_eq!(self.nodes[loss.0].len(), 1, "backward from a non-scalar node");
        for n in &mut self.nodes {
            n.grad.clear();
        }
        let mut pgrads = Gradients::new(self.params);
        self.nodes[loss.0].grad = vec![1.0];
        for idx in (0..=loss.0).rev() {
            if self.nodes[idx].grad.is_empty() {
                continue;
            }
            let g = std::mem::take(&mut self.nodes[idx].grad);
            let op = std::mem::replace(&mut self.nodes[idx].op, Op::Input);
            if self.fault == Some(op.kind()) {
                let faulty: Vec<f64> = g.iter().map(|v| v * 1.5).collect();
                self.backward_op(idx, &op, &faulty, &mut pgrads);
            } else {
                self.backward_op(idx, &op, &g, &mut pgrads);
            }
            self.nodes[idx].op = op;
            self.nodes[idx].grad = g;
        }
        pgrads
    }

    fn backward_op(&mut self, idx: usize, op: &Op, g: &[f64], pgrads: &mut Gradients) {
        match op {
            Op::Input => {}
            Op::Param(id) => {
                let len = self.params.get(*id).len();
                add_into(pgrads.slot_mut(*id, len), g);
            }
            Op::Gather { table, row } => {
                let t = self.params.get(*table);
                let n = t.cols();
                let slot = pgrads.slot_mut(*table, t.len());
                add_into(&mut slot[row * n..(row + 1) * n], g);
            }
            Op::MeanGather { table, rows } => {
                let t = self.params.get(*table);
                let n = t.cols();
                let inv = 1.0 / rows.len() as f64;
                let slot = pgrads.slot_mut(*table, t.len());
                for &r in rows {
                    for (d, v) in slot[r * n..(r + 1) * n].iter_mut().zip(g) {
                        *d += v * inv;
                    }
                }
            }
            Op::Affine { w, x, b } => {
                let wp = self.params.get(*w);
                let n = wp.cols();
                let wd = wp.data();
                let xv = self.nodes[x.0].data.clone();
                let mut gx = vec![0.0; n];
                for (i, &gi) in g.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    for (d, wij) in gx.iter_mut().zip(&wd[i * n..(i + 1) * n]) {
                        *d += gi * wij;
                    }
                }
                let slot = pgrads.slot_mut(*w, wp.len());
                for (i, &gi) in g.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    for (d, xj) in slot[i * n..(i + 1) * n].iter_mut().zip(&xv) {
                        *d += gi * xj;
                    }
                }
                if let Some(b) = b {
                    let len = self.params.get(*b).len();
                    add_into(pgrads.slot_mut(*b, len), g);
                }
                self.accumulate(*x, &gx);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                self.accumulate(*b, &neg);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> = g.iter().zip(&self.nodes[b.0].data).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(&self.nodes[a.0].data).map(|(x, y)| x * y).collect();
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::Scale(a, f) => {
                let ga: Vec<f64> = g.iter().map(|v| v * f).collect();
                self.accumulate(*a, &ga);
            }
            Op::Sum(items) => {
                for &i in items {
                    self.accumulate(i, g);
                }
            }
            Op::Mean(items) => {
                let inv = 1.0 / items.len() as f64;
                let gi: Vec<f64> = g.iter().map(|v| v * inv).collect();
                for &i in items {
                    self.accumulate(i, &gi);
                }
            }
            Op::Concat(items) => {
                let mut offset = 0;
                for &i in items {
                    let n = self.nodes[i.0].len();
                    let part = g[offset..offset + n].to_vec();
                    self.accumulate(i, &part);
                    offset += n;
                }
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].data;
                let ga: Vec<f64> = g.iter().zip(y).map(|(gv, s)| gv * s * (1.0 - s)).collect();
                self.accumulate(*a, &ga);
            }
            Op::Relu(a) => {
                let x = &self.nodes[a.0].data;
                let ga: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(*a, &ga);
            }
            Op::Dot(a, b) => {
                let s = g[0];
                let ga: Vec<f64> = self.nodes[b.0].data.iter().map(|v| v * s).collect();
                let gb: Vec<f64> = self.nodes[a.0].data.iter().map(|v| v * s).collect();
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::Softmax(a) => {
                let y = &self.nodes[idx].data;
                let gy: f64 = g.iter().zip(y).map(|(x, s)| x * s).sum();
                let ga: Vec<f64> = g.iter().zip(y).map(|(gv, s)| s * (gv - gy)).collect();
                self.accumulate(*a, &ga);
            }
            Op::WeightedSum { weights, values } => {
                let w = self.nodes[weights.0].data.clone();
                let gw: Vec<f64> = values
                    .iter()
                    .map(|v| self.nodes[v.0].data.iter().zip(g).map(|(x, y)| x * y).sum())
                    .collect();
                for (wi, &v) in w.iter().zip(values) {
                    let gv: Vec<f64> = g.iter().map(|x| x * wi).collect();
                    self.accumulate(v, &gv);
                }
                self.accumulate(*weights, &gw);
            }
            Op::Mask { input, mask } => {
                let ga: Vec<f64> = g.iter().zip(mask).map(|(x, m)| x * m).collect();
                self.accumulate(*input, &ga);
            }
            Op::LogSumExp(a) => {
                let x = &self.nodes[a.0].data;
                let lse = self.nodes[idx].data[0];
                let ga: Vec<f64> = x.iter().map(|v| g[0] * (v - lse).exp()).collect();
                self.accumulate(*a, &ga);
            }
            Op::BinaryCrossEntropy { prob, label, eps } => {
                let p = self.nodes[prob.0].data[0];
                let d = if p < *eps || p > 1.0 - eps {
                    0.0
                } else {
                    -label / p + (1.0 - label) / (1.0 - p)
                };
                self.accumulate(*prob, &[g[0] * d]);
            }
            Op::Normalize(a) => {
                let x = &self.nodes[a.0].data;
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let y = &self.nodes[idx].data;
                    let yg: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| (gv - yv * yg) / norm).collect();
                    self.accumulate(*a, &ga);
                }
            }
        }
    }
}
