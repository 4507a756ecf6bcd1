//! Line-based N-grams, the N-gram feature table and tolerant field parsers.

pub mod compute;
pub mod context;
pub mod lexicon;
pub mod ngram;
pub mod parse;

pub use compute::{
    compute_features, Feature, FeatureCalculator, FeatureValue, FeatureVector, NgramFeatures, DENSE_FEATURE_COUNT, FEATURE_COUNT,
};
pub use context::{context_concat, nearest_neighbors};
pub use lexicon::Lexicons;
pub use ngram::{make_ngrams, text_pattern};
pub use parse::{parse_amount, parse_currency, parse_date, parse_field, parse_integer, parse_percent, ParseKind, ParseResult};
