//! Contextual type annotation for Python variables.
//!
//! The pipeline: [`lexer`] turns source into tokens, [`corpus`] labels
//! assignment targets and cuts margin windows, [`subword`] trains the
//! byte-pair encoder, [`context`] assembles model inputs, [`nn`] holds the
//! GRU-attention classifier with hand-written gradients, [`engine`] trains
//! and annotates, and [`eval`] computes metrics and sweeps.

pub mod context;
pub mod cli;
pub mod corpus;
pub mod engine;
pub mod eval;
pub mod lexer;
pub mod nn;
pub mod subword;
