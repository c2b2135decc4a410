//! Zero-shot commonsense scoring: sentence metrics over causal, masked and
//! replaced-token-detection language models, plus the evaluation harness
//! around them.
//!
//! Lower layers come first: [`score`] holds the backend-independent
//! arithmetic, [`backend`] the model adapters, [`metrics`] the three
//! scoring rules, [`corpus`] datasets and prompts, [`eval`] accuracy and
//! significance, and [`analysis`] the word-level studies.

pub mod analysis;
pub mod backend;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod score;

pub use error::{Error, Result};
