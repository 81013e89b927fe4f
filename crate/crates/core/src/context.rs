//! Margin windows around a variable occurrence and their assembly into
//! model input ids.

use std::ops::Range;

use thiserror::Error;

use crate::corpus::RawAnnotation;
use crate::lexer::{tokens_on_line, Token};
use crate::subword::TokenEncoder;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("no token {name:?} at line {line}, column {col}")]
    TargetNotFound { name: String, line: usize, col: usize },
    #[error("line and name need {required} ids but the cap is {cap}")]
    Oversize { required: usize, cap: usize },
}

/// The four context segments of one occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    pub before: Vec<String>,
    pub line: Vec<String>,
    pub after: Vec<String>,
    pub name: String,
    pub margin: usize,
}

/// Assembled ids: `B(before) SEP B(line) SEP B(after) SEP B(name)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub ids: Vec<u32>,
    pub sep_positions: [usize; 3],
    pub name_span: Range<usize>,
}

impl ModelInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn texts<'a>(tokens: impl Iterator<Item = &'a Token>) -> Vec<String> {
    tokens.map(|t| t.text.clone()).collect()
}

/// Cut the margin window for `target` out of a file's token stream.
///
/// Margins count non-synthetic tokens and stop silently at file boundaries.
pub fn extract_window(
    tokens: &[Token],
    target: &RawAnnotation,
    margin: usize,
) -> Result<ContextWindow, ContextError> {
    let line = tokens_on_line(tokens, target.line);
    let found = line
        .iter()
        .any(|t| t.col_start == target.col_start && t.text == target.var_name);
    if !found {
        return Err(ContextError::TargetNotFound {
            name: target.var_name.clone(),
            line: target.line,
            col: target.col_start,
        });
    }
    let start = tokens.partition_point(|t| t.line < target.line);
    let end = start + line.len();
    let mut before = texts(tokens[..start].iter().rev().filter(|t| !t.is_synthetic()).take(margin));
    before.reverse();
    Ok(ContextWindow {
        before,
        line: texts(line.iter().filter(|t| !t.is_synthetic())),
        after: texts(tokens[end..].iter().filter(|t| !t.is_synthetic()).take(margin)),
        name: target.var_name.clone(),
        margin,
    })
}

fn encode_all<E: TokenEncoder + ?Sized>(enc: &E, segment: &[String]) -> Vec<u32> {
    segment.iter().flat_map(|t| enc.encode_token(t)).collect()
}

fn layout(sep: u32, before: &[u32], line: &[u32], after: &[u32], name: &[u32]) -> ModelInput {
    let mut ids = Vec::with_capacity(before.len() + line.len() + after.len() + name.len() + 3);
    let mut seps = [0; 3];
    for (k, seg) in [before, line, after].into_iter().enumerate() {
        ids.extend_from_slice(seg);
        seps[k] = ids.len();
        ids.push(sep);
    }
    let name_start = ids.len();
    ids.extend_from_slice(name);
    ModelInput {
        name_span: name_start..ids.len(),
        ids,
        sep_positions: seps,
    }
}

/// Encode and lay out a window, trimming the oldest before-context ids
/// first and then the leading after-context ids to fit `tensor_len`.
pub fn assemble<E: TokenEncoder + ?Sized>(
    window: &ContextWindow,
    enc: &E,
    tensor_len: usize,
) -> Result<ModelInput, ContextError> {
    let before = encode_all(enc, &window.before);
    let line = encode_all(enc, &window.line);
    let after = encode_all(enc, &window.after);
    let name = enc.encode_token(&window.name);
    let fixed = line.len() + name.len() + 3;
    if fixed > tensor_len {
        return Err(ContextError::Oversize {
            required: fixed,
            cap: tensor_len,
        });
    }
    let mut excess = (fixed + before.len() + after.len()).saturating_sub(tensor_len);
    let cut_before = excess.min(before.len());
    excess -= cut_before;
    let cut_after = excess.min(after.len());
    Ok(layout(
        enc.sep_id(),
        &before[cut_before..],
        &line,
        &after[cut_after..],
        &name,
    ))
}

/// The context-free input `SEP SEP SEP B(name)` used by the ablation.
pub fn assemble_name_only<E: TokenEncoder + ?Sized>(
    name: &str,
    enc: &E,
    tensor_len: usize,
) -> Result<ModelInput, ContextError> {
    let name = enc.encode_token(name);
    if name.len() + 3 > tensor_len {
        return Err(ContextError::Oversize {
            required: name.len() + 3,
            cap: tensor_len,
        });
    }
    Ok(layout(enc.sep_id(), &[], &[], &[], &name))
}
