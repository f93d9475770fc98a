//! Minimal deterministic reverse-mode differentiation engine.
//!
//! Everything runs on 64-bit floats and a flat [`Tape`]: forward calls
//! append nodes recording the operation and its inputs, [`Tape::backward`]
//! walks the recorded nodes in reverse and accumulates exact adjoints into
//! per-node gradient buffers. There is no broadcasting, no graph
//! optimization and no parallelism; identical inputs produce bit-identical
//! results on every run, which is what the training determinism contract
//! needs.
//!
//! A backward pass adds its contribution to the persistent gradients, so
//! two passes without [`Tape::zero_grads`] accumulate exactly twice the
//! gradient.

mod adam;
mod checkpoint;
mod tape;

pub use adam::{adam_step, AdamParams, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use tape::{generalized_logistic, GradError, NodeId, Tape};

/// A named parameter array. Shapes follow the conventions of the tape ops
/// that consume them (conv weights `[out, in, kh, kw]`, linear weights
/// `[out, in]`, biases `[out]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        let count: usize = shape.iter().product();
        assert_eq!(count, values.len(), "parameter value count must match shape");
        Self {
            name: name.into(),
            shape,
            values,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let count: usize = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![0.0; count],
        }
    }
}

/// Ordered collection of model parameters. Order is part of the model
/// identity: optimizer state and checkpoints go by position and name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, param: Param) {
        assert!(
            self.get(&param.name).is_none(),
            "duplicate parameter name {}",
            param.name
        );
        self.params.push(param);
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }
}

/// Symmetric uniform init in the Glorot range `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(
    rng: &mut impl rand::Rng,
    fan_in: usize,
    fan_out: usize,
    count: usize,
) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
}
