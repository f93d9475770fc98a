//! Adam optimizer with bias correction.

use super::ParamSet;

/// Optimizer hyperparameters. The defaults pair a small fixed learning
/// rate with heavy gradient forgetting, which suits fully stochastic
/// (batch size 1) training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.99,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first and second gradient moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    hyper: AdamParams,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// Moment buffers are allocated to match `params` positionally.
    pub fn new(params: &ParamSet, hyper: AdamParams) -> Self {
        let first = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
        let second = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
        Self {
            hyper,
            first,
            second,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn hyper(&self) -> &AdamParams {
        &self.hyper
    }
}

/// One bias-corrected update:
/// `m <- b1 m + (1-b1) g`, `s <- b2 s + (1-b2) g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(s_hat) + eps)`.
///
/// `grads` must align with `params` positionally.
pub fn adam_step(state: &mut AdamState, params: &mut ParamSet, grads: &[Vec<f64>]) {
    assert_eq!(
        grads.len(),
        params.len(),
        "gradient count does not match parameter count"
    );
    state.step += 1;
    let t = state.step as i32;
    let AdamParams {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.hyper;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    for (pi, param) in params.iter_mut().enumerate() {
        let g = &grads[pi];
        assert_eq!(g.len(), param.values.len(), "gradient shape mismatch");
        let m = &mut state.first[pi];
        let s = &mut state.second[pi];
        for j in 0..g.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            s[j] = beta2 * s[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let s_hat = s[j] / bias2;
            param.values[j] -= learning_rate * m_hat / (s_hat.sqrt() + epsilon);
        }
    }
}
