//! Hashing-trick vectors over named features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::compute::{
    FeatureCalculator, FeatureValue, FeatureVector, NgramFeatures, BOOLEAN_FEATURES, NUMERIC_FEATURES, TEXT_FEATURES,
};
use crate::features::context::{nearest_neighbors, GROUPS};
use crate::features::lexicon::Lexicons;
use crate::hashing::bucket;
use crate::model::{Document, NGram};

/// A binary vector of size `2^bits`, stored as its sorted active indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedVector {
    bits: u32,
    indices: Vec<u32>,
}

impl HashedVector {
    pub fn new(bits: u32, mut indices: Vec<u32>) -> Result<Self> {
        check_bits(bits, 1)?;
        if let Some(&bad) = indices.iter().find(|&&i| u64::from(i) >= 1u64 << bits) {
            return Err(Error::DimensionMismatch { expected: 1 << bits, got: bad as usize });
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(HashedVector { bits, indices })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

pub(crate) fn check_bits(bits: u32, min: u32) -> Result<()> {
    if !(min..=30).contains(&bits) {
        return Err(Error::Config(format!("hash bits must lie in [{min}, 30], got {bits}")));
    }
    Ok(())
}

fn token(buf: &mut String, prefix: &str, name: &str, value: &FeatureValue) {
    buf.clear();
    if !prefix.is_empty() {
        buf.push_str(prefix);
        buf.push('.');
    }
    buf.push_str(name);
    buf.push('=');
    value.render(buf);
}

/// Index of `stableHash(fullName + "=" + value) mod 2^bits` for every feature.
pub fn hash_features(fv: &FeatureVector, bits: u32) -> Result<HashedVector> {
    check_bits(bits, 1)?;
    let mut buf = String::new();
    let indices =
        fv.0.iter()
            .map(|f| {
                token(&mut buf, &f.prefix, &f.name, &f.value);
                bucket(buf.as_bytes(), bits)
            })
            .collect();
    HashedVector::new(bits, indices)
}

const PER_GROUP: usize = TEXT_FEATURES.len() + NUMERIC_FEATURES.len() + BOOLEAN_FEATURES.len();

fn group_indices(f: &NgramFeatures, prefix: &str, bits: u32, buf: &mut String) -> [u32; PER_GROUP] {
    let mut out = [0u32; PER_GROUP];
    let values = f
        .text
        .iter()
        .map(|t| FeatureValue::Text(t.clone()))
        .chain(f.numeric.iter().map(|x| FeatureValue::Num(*x)))
        .chain(f.boolean.iter().map(|b| FeatureValue::Bool(*b)));
    let names = TEXT_FEATURES.iter().chain(&NUMERIC_FEATURES).chain(&BOOLEAN_FEATURES);
    for ((slot, name), value) in out.iter_mut().zip(names).zip(values) {
        token(buf, prefix, name, &value);
        *slot = bucket(buf.as_bytes(), bits);
    }
    out
}

fn absent_indices(prefix: &str, bits: u32, buf: &mut String) -> [u32; PER_GROUP] {
    let mut out = [0u32; PER_GROUP];
    for (slot, name) in out.iter_mut().zip(TEXT_FEATURES.iter().chain(&NUMERIC_FEATURES).chain(&BOOLEAN_FEATURES)) {
        token(buf, prefix, name, &FeatureValue::Absent);
        *slot = bucket(buf.as_bytes(), bits);
    }
    out
}

/// Hashed context-concatenated vectors for the given N-grams of one document.
/// Equal to hashing each N-gram's context concatenation, without building it.
pub fn hash_document(doc: &Document, ngrams: &[NGram], lex: &Lexicons, bits: u32) -> Result<Vec<HashedVector>> {
    check_bits(bits, 1)?;
    let calc = FeatureCalculator::new(doc, lex);
    let mut buf = String::new();
    // per N-gram, its own features hashed under each group prefix
    let per_prefix: Vec<[[u32; PER_GROUP]; 5]> = ngrams
        .iter()
        .map(|g| {
            let f = calc.compute(g);
            GROUPS.map(|p| group_indices(&f, p, bits, &mut buf))
        })
        .collect();
    let absent: [[u32; PER_GROUP]; 5] = GROUPS.map(|p| absent_indices(p, bits, &mut buf));
    let neighbors = nearest_neighbors(doc, ngrams);
    (0..ngrams.len())
        .map(|i| {
            let mut idx = Vec::with_capacity(5 * PER_GROUP);
            idx.extend_from_slice(&per_prefix[i][0]);
            for (g, n) in neighbors[i].iter().enumerate() {
                match n {
                    Some(j) => idx.extend_from_slice(&per_prefix[*j][g + 1]),
                    None => idx.extend_from_slice(&absent[g + 1]),
                }
            }
            HashedVector::new(bits, idx)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::compute::Feature;
    use crate::features::context::context_concat;
    use crate::features::ngram::make_ngrams;
    use crate::testutil::doc_from_lines;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn streaming_matches_explicit_concatenation() {
        let doc = doc_from_lines(&[&["Invoice", "No.", "162054"], &["Total", "1.234,56", "EUR"], &["Thanks"]]);
        let ngrams = make_ngrams(&doc, 4);
        let lex = Lexicons::builtin();
        let streamed = hash_document(&doc, &ngrams, lex, 18).unwrap();
        let calc = FeatureCalculator::new(&doc, lex);
        let feats: Vec<_> = ngrams.iter().map(|g| calc.compute(g)).collect();
        for (i, hv) in streamed.iter().enumerate() {
            let explicit = hash_features(&context_concat(i, &ngrams, &doc, &feats), 18).unwrap();
            assert_eq!(hv, &explicit);
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fv = FeatureVector(
            (0..1000).map(|i| Feature { prefix: String::new(), name: format!("f{i}"), value: FeatureValue::Num(rng.random()) }).collect(),
        );
        let small = hash_features(&fv, 4).unwrap();
        assert!(small.indices().iter().all(|&i| i < 16));
        assert_eq!(hash_features(&fv, 20).unwrap(), hash_features(&fv, 20).unwrap());
        assert!(hash_features(&fv, 20).unwrap().indices().len() <= 1000);
    }

    #[test]
    fn numbers_render_with_four_decimals() {
        let one = |x: f64| {
            hash_features(&FeatureVector(vec![Feature { prefix: "own".into(), name: "length".into(), value: FeatureValue::Num(x) }]), 30)
                .unwrap()
        };
        assert_eq!(one(0.12341), one(0.12344));
        assert_ne!(one(0.1234), one(0.1235));
        assert_eq!(one(0.0), one(-0.0));
        let mut s = String::new();
        token(&mut s, "own", "length", &FeatureValue::Num(5.0));
        assert_eq!(s, "own.length=5.0000");
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(HashedVector::new(4, vec![16]).is_err());
        assert_eq!(HashedVector::new(4, vec![3, 1, 3]).unwrap().indices(), &[1, 3]);
    }
}
