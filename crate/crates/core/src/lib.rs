//! Total-variation-guided training for autoregressive sequence models.
//!
//! The crate bundles a small reverse-mode autodiff engine, exact categorical
//! distribution algebra, the TaiLr objective and its baselines, exhaustive
//! numerical verifiers for the underlying bounds, a gated recurrent language
//! model, the synthetic oracle experiment pipeline, and generation metrics.

pub mod autodiff;
pub mod bounds;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod metrics;
pub mod objectives;
pub mod seqmodel;
pub mod synth;

pub use error::{Error, Result};
