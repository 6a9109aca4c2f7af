//! A small neural toolkit with hand-written backward passes.
//!
//! Every component keeps the intermediate values of its forward pass in a
//! trace struct and exposes a `backward` that accumulates exact gradients
//! into a zeroed copy of itself. That copy is also what the optimizers
//! consume, so parameters and gradients share one naming scheme through
//! [`Params`].

mod attention;
mod dense;
mod gradcheck;
mod lstm;
mod matrix;
mod optim;

use thiserror::Error;

pub use attention::{
    attention_apply, self_attention_apply, softmax, AttentionNet, AttentionTrace,
    SelfAttentionTrace, ATTENTION_HIDDEN,
};
pub use dense::{Dense, DenseNet, DenseTrace, OutputActivation};
pub use gradcheck::{check_gradients, GradCheck, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use lstm::{bilstm_encode, lstm_step, BiLstm, BiLstmTrace, LstmParams, LstmStepCache};
pub use matrix::Matrix;
pub use optim::{Optimizer, OptimizerKind, TrainConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("shape mismatch for parameter {0}")]
    ShapeMismatch(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<(), NeuralError> {
    if expected == found {
        Ok(())
    } else {
        Err(NeuralError::DimensionMismatch { expected, found })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub const BCE_CLAMP: f64 = 1e-12;

/// Binary cross-entropy with `p` clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Numerically stable `ln(sum(exp(xs)))`; `-inf` for an empty or all `-inf` input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Named access to trainable matrices. Names are stable and unique; the
/// order of the returned list is the same for every instance of a type with
/// equal shapes, which lets gradients and optimizer moments pair up by index.
pub trait Params {
    fn params(&self) -> Vec<(String, &Matrix)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, m)| m.data().len()).sum()
    }

    /// A copy with every parameter set to zero, used as a gradient buffer.
    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for (_, m) in z.params_mut() {
            m.fill(0.0);
        }
        z
    }

    /// `self += scale * other`, parameter by parameter.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for ((_, a), (_, b)) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
    }
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    items: Vec<(String, &'a Matrix)>,
) -> Vec<(String, &'a Matrix)> {
    items
        .into_iter()
        .map(|(n, m)| (format!("{prefix}.{n}"), m))
        .collect()
}

pub(crate) fn prefixed_mut<'a>(
    prefix: &str,
    items: Vec<(String, &'a mut Matrix)>,
) -> Vec<(String, &'a mut Matrix)> {
    items
        .into_iter()
        .map(|(n, m)| (format!("{prefix}.{n}"), m))
        .collect()
}
