//! Invoice field extraction from positioned text.
//!
//! Documents flow through N-gram construction, feature calculation, one of two
//! classifiers (a hashed logistic regression over N-grams, or a bidirectional
//! LSTM over words), and a post processor that assembles the final invoice.

pub mod autolabel;
pub mod baseline;
pub mod error;
pub mod eval;
pub mod features;
pub mod hashing;
pub mod ingest;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod postprocess;
pub mod seq;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{Document, FieldType, Invoice, IobTag, NGram, TagSet, Word};
