use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("tensor with shape {shape:?} needs {expected} values, got {actual}")]
    BadTensor {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("distributions have different sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),

    #[error("support violation at index {index}: p = {p} but q = 0")]
    SupportViolation { index: usize, p: f64 },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("enumeration needs {needed} outcomes, budget is {budget}")]
    EnumerationBudget { needed: u128, budget: u128 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}, step {step}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        batch: usize,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing corpus file {0}")]
    MissingCorpus(PathBuf),

    #[error("config: {0}")]
    Config(String),

    #[error("vocabulary mismatch: {0} vs {1}")]
    VocabMismatch(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
