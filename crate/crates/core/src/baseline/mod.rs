//! One-vs-rest logistic regression over hashed N-gram context features.

pub mod hashed;
pub mod linear;

pub use hashed::{hash_document, hash_features, HashedVector};
pub use linear::{train_baseline, BaselineConfig, Example, LinearModel, CLASSES};
