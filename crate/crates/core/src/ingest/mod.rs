//! Document ingestion, synthetic corpora and splits.

pub mod corpus;
pub mod hocr;
pub mod json;
pub mod split;
pub mod synth;

pub use corpus::{read_corpus, write_corpus};
pub use hocr::{load_hocr, parse_hocr, save_hocr, write_hocr};
pub use json::{load_document, load_document_bytes, save_document, PositionalTextFile};
pub use split::{split_by_document, split_by_group, Ratios, SplitIndices};
pub use synth::{generate_corpus, CorpusSpec, LabeledPair, Language, NoiseLog, NoiseSpec};
