//! Named parameters, weight initialization, and the ADAM optimizer.

use rand::Rng;

use super::tensor::Tensor;

/// A learnable tensor with its gradient and a stable name used for
/// checkpoint layout.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Regularized parameters are weight matrices; biases and norm
    /// gains/biases are excluded from the L2 penalty.
    pub regularized: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor, regularized: bool) -> Self {
        let (r, c) = value.shape();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor::zeros(r, c),
            regularized,
        }
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.values_mut() {
            *g = 0.0;
        }
    }
}

/// Uniform Kaiming-style init with bound sqrt(6 / fan_in), for ReLU layers.
pub fn kaiming_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / rows as f64).sqrt();
    uniform(rows, cols, bound, rng)
}

/// Xavier init with bound sqrt(6 / (fan_in + fan_out)), for projections.
pub fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, bound, rng)
}

fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for v in t.values_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    t
}

/// Bias-corrected ADAM state, aligned index-for-index with a parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Parameter], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| zeros_like(&p.value)).collect(),
            v: params.iter().map(|p| zeros_like(&p.value)).collect(),
        }
    }
}

fn zeros_like(t: &Tensor) -> Tensor {
    let (r, c) = t.shape();
    Tensor::zeros(r, c)
}

/// One bias-corrected ADAM update over all parameters.
pub fn adam_step(params: &mut [Parameter], state: &mut AdamState) {
    assert_eq!(params.len(), state.m.len(), "optimizer state out of sync");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let m = state.m[i].values_mut();
        let v = state.v[i].values_mut();
        let g = p.grad.values();
        for ((w, (&gi, mi)), vi) in p
            .value
            .values_mut()
            .iter_mut()
            .zip(g.iter().zip(m.iter_mut()))
            .zip(v.iter_mut())
        {
            *mi = state.beta1 * *mi + (1.0 - state.beta1) * gi;
            *vi = state.beta2 * *vi + (1.0 - state.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
}
