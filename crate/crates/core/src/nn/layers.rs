//! Layer-level operations composed from tape primitives.

use rand::Rng;

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// y = act(x W + b); x: m x d_in, W: d_in x d_out, b: 1 x d_out.
pub fn fc(
    tape: &mut Tape,
    x: NodeId,
    w: NodeId,
    b: NodeId,
    activation: Activation,
) -> Result<NodeId, NnError> {
    let xw = tape.matmul(x, w)?;
    let pre = tape.add_row(xw, b)?;
    Ok(match activation {
        Activation::Relu => tape.relu(pre),
        Activation::None => pre,
    })
}

/// Scaled dot-product attention with a single query row.
///
/// q: 1 x d_k, k: n x d_k, v: n x d_v. The key set must be non-empty; the
/// caller decides what an edit-less changeset means.
pub fn attention(tape: &mut Tape, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId, NnError> {
    let n = tape.value(k).rows();
    if n == 0 {
        return Err(NnError::EmptyKeySet);
    }
    if tape.value(v).rows() != n {
        return Err(NnError::ShapeMismatch {
            op: "attention values",
            left: tape.value(k).shape(),
            right: tape.value(v).shape(),
        });
    }
    let d_k = tape.value(k).cols();
    let scores = tape.matmul_nt(q, k)?;
    let scaled = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = tape.softmax(scaled);
    tape.matmul(weights, v)
}

/// Per-head query/key/value projections.
#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
}

/// Multi-head attention: heads are concatenated and projected by `w_o`.
pub fn multi_head(
    tape: &mut Tape,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    heads: &[HeadNodes],
    w_o: NodeId,
) -> Result<NodeId, NnError> {
    assert!(!heads.is_empty(), "multi_head requires at least one head");
    let mut outputs = Vec::with_capacity(heads.len());
    for h in heads {
        let qp = tape.matmul(q, h.wq)?;
        let kp = tape.matmul(k, h.wk)?;
        let vp = tape.matmul(v, h.wv)?;
        outputs.push(attention(tape, qp, kp, vp)?);
    }
    let concat = tape.concat_cols(&outputs)?;
    tape.matmul(concat, w_o)
}

/// Inverted dropout: in train mode each component survives with probability
/// 1 - rate and is scaled by 1/(1 - rate); in eval mode the identity.
pub fn dropout<R: Rng>(
    tape: &mut Tape,
    x: NodeId,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidRate(rate));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let (rows, cols) = tape.value(x).shape();
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(rows, cols);
    for m in mask.values_mut() {
        if rng.gen::<f64>() >= rate {
            *m = keep;
        }
    }
    tape.mask_mul(x, mask)
}

/// Mean binary cross-entropy over a batch of scalar predictions.
pub fn bce_loss(tape: &mut Tape, preds: &[NodeId], targets: &[f64]) -> Result<NodeId, NnError> {
    assert_eq!(preds.len(), targets.len(), "one target per prediction");
    assert!(!preds.is_empty(), "bce_loss over an empty batch");
    let losses: Vec<NodeId> = preds
        .iter()
        .zip(targets)
        .map(|(&p, &y)| tape.bce(p, y))
        .collect::<Result<_, _>>()?;
    let total = tape.add_n(&losses)?;
    Ok(tape.scale(total, 1.0 / losses.len() as f64))
}

/// lambda * sum of squared entries over the given weight matrices. Biases
/// and normalization gains are the caller's responsibility to exclude.
pub fn l2_penalty(tape: &mut Tape, weights: &[NodeId], lambda: f64) -> Result<NodeId, NnError> {
    assert!(!weights.is_empty(), "l2_penalty over no weights");
    let squares: Vec<NodeId> = weights.iter().map(|&w| tape.sum_squares(w)).collect();
    let total = tape.add_n(&squares)?;
    Ok(tape.scale(total, lambda))
}
