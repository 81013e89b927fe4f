//! From-scratch neural core in `f64`.

mod adam;
mod gradcheck;
mod matrix;
mod model;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use matrix::Matrix;
pub use model::{
    attention_pool, backward, batch_gradients, batch_loss, classify, forward, gru_forward, nll_loss,
    softmax_probs, Attention, BatchResult, Dropout, Example, Forward, GruOutput, GruParams, GruStep,
    ModelDims, ModelParams, PROB_FLOOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
