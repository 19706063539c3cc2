//! Reverse-mode differentiation over a dynamically recorded operation tape.
//!
//! A [`Tape`] owns every intermediate tensor of one forward pass. Operations
//! append nodes and can only reference earlier nodes, so the node order is
//! already topological; [`Tape::backward`] walks it once in reverse.

use super::tensor::Tensor;
use super::NnError;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// (m x k)(k x n)
    MatMul(NodeId, NodeId),
    /// (m x k)(n x k)^T
    MatMulNT(NodeId, NodeId),
    /// (m x n) + (1 x n) broadcast over rows
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// Row-wise softmax, stabilized by row-max subtraction.
    Softmax(NodeId),
    /// Per-row normalization over columns with learnable gain and bias.
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    Scale(NodeId, f64),
    /// Horizontal concatenation of row vectors.
    ConcatCols(Vec<NodeId>),
    /// Elementwise product with a constant mask (inverted dropout).
    MaskMul(NodeId, Tensor),
    /// Binary cross-entropy of a scalar prediction against a fixed label.
    Bce {
        pred: NodeId,
        target: f64,
    },
    /// Elementwise sum of same-shaped nodes.
    AddN(Vec<NodeId>),
    /// Scalar sum of squares of all entries.
    SumSquares(NodeId),
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let (r, c) = value.shape();
        self.nodes.push(Node {
            value,
            grad: Tensor::zeros(r, c),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(NnError::ShapeMismatch {
                op: "matmul",
                left: (ar, ac),
                right: (br, bc),
            });
        }
        let v = self.value(a).matmul(self.value(b));
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != bc {
            return Err(NnError::ShapeMismatch {
                op: "matmul_nt",
                left: (ar, ac),
                right: (br, bc),
            });
        }
        let v = self.value(a).matmul_nt(self.value(b));
        Ok(self.push(v, Op::MatMulNT(a, b)))
    }

    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if br != 1 || bc != ac {
            return Err(NnError::ShapeMismatch {
                op: "add_row",
                left: (ar, ac),
                right: (br, bc),
            });
        }
        let mut v = self.value(a).clone();
        for r in 0..ar {
            for c in 0..ac {
                v.set(r, c, v.get(r, c) + self.value(b).get(0, c));
            }
        }
        Ok(self.push(v, Op::AddRow(a, b)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for x in v.values_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for x in v.values_mut() {
            *x = stable_sigmoid(*x);
        }
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let (rows, cols) = self.value(a).shape();
        let mut v = self.value(a).clone();
        for r in 0..rows {
            let row = &mut v.values_mut()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(v, Op::Softmax(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId, NnError> {
        let (rows, cols) = self.value(x).shape();
        for (name, id) in [("gain", gain), ("bias", bias)] {
            let s = self.value(id).shape();
            if s != (1, cols) {
                return Err(NnError::ShapeMismatch {
                    op: match name {
                        "gain" => "layer_norm gain",
                        _ => "layer_norm bias",
                    },
                    left: (rows, cols),
                    right: s,
                });
            }
        }
        let mut v = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = self.value(x).row_slice(r).to_vec();
            let (mean, inv_std) = row_stats(&row);
            for (c, value) in row.iter().enumerate() {
                let xhat = (value - mean) * inv_std;
                v.set(
                    r,
                    c,
                    self.value(gain).get(0, c) * xhat + self.value(bias).get(0, c),
                );
            }
        }
        Ok(self.push(v, Op::LayerNorm { x, gain, bias }))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut v = self.value(a).clone();
        v.scale_assign(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn concat_cols(&mut self, ids: &[NodeId]) -> Result<NodeId, NnError> {
        let mut data = Vec::new();
        for &id in ids {
            let t = self.value(id);
            if t.rows() != 1 {
                return Err(NnError::ShapeMismatch {
                    op: "concat_cols",
                    left: (1, 0),
                    right: t.shape(),
                });
            }
            data.extend_from_slice(t.values());
        }
        let v = Tensor::row(data);
        Ok(self.push(v, Op::ConcatCols(ids.to_vec())))
    }

    /// Elementwise product with a constant mask the gradient also passes
    /// through; underlies inverted dropout.
    pub fn mask_mul(&mut self, a: NodeId, mask: Tensor) -> Result<NodeId, NnError> {
        if self.value(a).shape() != mask.shape() {
            return Err(NnError::ShapeMismatch {
                op: "mask_mul",
                left: self.value(a).shape(),
                right: mask.shape(),
            });
        }
        let mut v = self.value(a).clone();
        for (x, m) in v.values_mut().iter_mut().zip(mask.values()) {
            *x *= m;
        }
        Ok(self.push(v, Op::MaskMul(a, mask)))
    }

    /// Binary cross-entropy of a scalar prediction in (0,1) against a 0/1
    /// label, with the prediction clamped to [1e-12, 1 - 1e-12].
    pub fn bce(&mut self, pred: NodeId, target: f64) -> Result<NodeId, NnError> {
        if self.value(pred).shape() != (1, 1) {
            return Err(NnError::ShapeMismatch {
                op: "bce",
                left: (1, 1),
                right: self.value(pred).shape(),
            });
        }
        let p = clamp_pred(self.value(pred).item());
        let loss = -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
        Ok(self.push(Tensor::scalar(loss), Op::Bce { pred, target }))
    }

    pub fn add_n(&mut self, ids: &[NodeId]) -> Result<NodeId, NnError> {
        assert!(!ids.is_empty(), "add_n of zero nodes");
        let shape = self.value(ids[0]).shape();
        let mut v = self.value(ids[0]).clone();
        for &id in &ids[1..] {
            if self.value(id).shape() != shape {
                return Err(NnError::ShapeMismatch {
                    op: "add_n",
                    left: shape,
                    right: self.value(id).shape(),
                });
            }
            v.add_assign(self.value(id));
        }
        Ok(self.push(v, Op::AddN(ids.to_vec())))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).values().iter().map(|x| x * x).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(a))
    }

    /// Smallest |x| fed into any ReLU on this tape; finite-difference
    /// checks need this margin to stay well above the probe step.
    pub fn relu_input_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu(a) = &node.op {
                for v in self.nodes[a.0].value.values() {
                    margin = margin.min(v.abs());
                }
            }
        }
        margin
    }

    /// Propagates gradients from a scalar output back to every node.
    pub fn backward(&mut self, out: NodeId) {
        assert_eq!(
            self.value(out).shape(),
            (1, 1),
            "backward requires a scalar output"
        );
        for node in &mut self.nodes {
            for g in node.grad.values_mut() {
                *g = 0.0;
            }
        }
        self.nodes[out.0].grad.set(0, 0, 1.0);

        for i in (0..self.nodes.len()).rev() {
            // The node's own grad is complete once we reach it; take a copy so
            // we can mutate parents.
            let grad = self.nodes[i].grad.clone();
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = grad.matmul_nt(&self.nodes[b.0].value);
                    let db = self.nodes[a.0].value.matmul_tn(&grad);
                    self.nodes[a.0].grad.add_assign(&da);
                    self.nodes[b.0].grad.add_assign(&db);
                }
                Op::MatMulNT(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = grad.matmul(&self.nodes[b.0].value);
                    let db = grad.matmul_tn(&self.nodes[a.0].value);
                    self.nodes[a.0].grad.add_assign(&da);
                    self.nodes[b.0].grad.add_assign(&db);
                }
                Op::AddRow(a, b) => {
                    let (a, b) = (*a, *b);
                    self.nodes[a.0].grad.add_assign(&grad);
                    let (rows, cols) = grad.shape();
                    for c in 0..cols {
                        let mut s = 0.0;
                        for r in 0..rows {
                            s += grad.get(r, c);
                        }
                        let cur = self.nodes[b.0].grad.get(0, c);
                        self.nodes[b.0].grad.set(0, c, cur + s);
                    }
                }
                Op::Relu(a) => {
                    let a = *a;
                    let mut da = grad.clone();
                    for (g, x) in da
                        .values_mut()
                        .iter_mut()
                        .zip(self.nodes[a.0].value.values())
                    {
                        if *x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    self.nodes[a.0].grad.add_assign(&da);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let mut da = grad.clone();
                    for (g, s) in da.values_mut().iter_mut().zip(self.nodes[i].value.values()) {
                        *g *= s * (1.0 - s);
                    }
                    self.nodes[a.0].grad.add_assign(&da);
                }
                Op::Softmax(a) => {
                    let a = *a;
                    let (rows, cols) = grad.shape();
                    let mut da = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let s = self.nodes[i].value.row_slice(r);
                        let g = grad.row_slice(r);
                        let dot: f64 = s.iter().zip(g).map(|(si, gi)| si * gi).sum();
                        for c in 0..cols {
                            da.set(r, c, s[c] * (g[c] - dot));
                        }
                    }
                    self.nodes[a.0].grad.add_assign(&da);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let (x, gain, bias) = (*x, *gain, *bias);
                    let (rows, cols) = grad.shape();
                    let mut dx = Tensor::zeros(rows, cols);
                    let mut dgain = Tensor::zeros(1, cols);
                    let mut dbias = Tensor::zeros(1, cols);
                    for r in 0..rows {
                        let xrow = self.nodes[x.0].value.row_slice(r).to_vec();
                        let (mean, inv_std) = row_stats(&xrow);
                        let xhat: Vec<f64> = xrow.iter().map(|v| (v - mean) * inv_std).collect();
                        let g = grad.row_slice(r);
                        let gg: Vec<f64> = (0..cols)
                            .map(|c| g[c] * self.nodes[gain.0].value.get(0, c))
                            .collect();
                        let mean_gg: f64 = gg.iter().sum::<f64>() / cols as f64;
                        let mean_gg_xhat: f64 =
                            gg.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            dx.set(r, c, inv_std * (gg[c] - mean_gg - xhat[c] * mean_gg_xhat));
                            dgain.set(0, c, dgain.get(0, c) + g[c] * xhat[c]);
                            dbias.set(0, c, dbias.get(0, c) + g[c]);
                        }
                    }
                    self.nodes[x.0].grad.add_assign(&dx);
                    self.nodes[gain.0].grad.add_assign(&dgain);
                    self.nodes[bias.0].grad.add_assign(&dbias);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    let mut da = grad.clone();
                    da.scale_assign(c);
                    self.nodes[a.0].grad.add_assign(&da);
                }
                Op::ConcatCols(ids) => {
                    let ids = ids.clone();
                    let mut offset = 0;
                    for id in ids {
                        let n = self.nodes[id.0].value.cols();
                        for c in 0..n {
                            let cur = self.nodes[id.0].grad.get(0, c);
                            self.nodes[id.0]
                                .grad
                                .set(0, c, cur + grad.get(0, offset + c));
                        }
                        offset += n;
                    }
                }
                Op::MaskMul(a, mask) => {
                    let a = *a;
                    let mut da = grad.clone();
                    for (g, m) in da.values_mut().iter_mut().zip(mask.values()) {
                        *g *= m;
                    }
                    self.nodes[a.0].grad.add_assign(&da);
                }
                Op::Bce { pred, target } => {
                    let (pred, target) = (*pred, *target);
                    let p = self.nodes[pred.0].value.item();
                    // Zero slope where the clamp binds; elsewhere the exact
                    // derivative (p - y) / (p (1 - p)).
                    let d = if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                        0.0
                    } else {
                        (p - target) / (p * (1.0 - p))
                    };
                    let cur = self.nodes[pred.0].grad.get(0, 0);
                    self.nodes[pred.0].grad.set(0, 0, cur + grad.item() * d);
                }
                Op::AddN(ids) => {
                    let ids = ids.clone();
                    for id in ids {
                        self.nodes[id.0].grad.add_assign(&grad);
                    }
                }
                Op::SumSquares(a) => {
                    let a = *a;
                    let g = grad.item();
                    let mut da = self.nodes[a.0].value.clone();
                    da.scale_assign(2.0 * g);
                    self.nodes[a.0].grad.add_assign(&da);
                }
            }
        }
    }
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_pred(p: f64) -> f64 {
    p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}
