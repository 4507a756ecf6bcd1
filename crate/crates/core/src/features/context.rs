//! Context concatenation: own features plus those of the nearest N-gram in each direction.

use super::compute::{Feature, FeatureValue, FeatureVector, NgramFeatures, BOOLEAN_FEATURES, NUMERIC_FEATURES, TEXT_FEATURES};
use crate::model::{Document, NGram};

/// Group prefixes in output order.
pub const GROUPS: [&str; 5] = ["own", "top", "bottom", "left", "right"];

/// Nearest N-gram (by center distance) whose center lies strictly above, below,
/// left and right of each N-gram's center. N-grams sharing a word with the
/// query, or on another page, are never neighbors. Ties go to the lower index.
pub fn nearest_neighbors(doc: &Document, ngrams: &[NGram]) -> Vec<[Option<usize>; 4]> {
    let centers: Vec<(f64, f64)> = ngrams.iter().map(|g| g.center(doc)).collect();
    let pages: Vec<usize> = ngrams.iter().map(|g| doc.words()[g.start].page).collect();
    (0..ngrams.len())
        .map(|i| {
            let (cx, cy) = centers[i];
            let own = ngrams[i].range();
            let mut best: [Option<(f64, usize)>; 4] = [None; 4];
            for (j, g) in ngrams.iter().enumerate() {
                if j == i || pages[j] != pages[i] || (g.start < own.end && own.start < g.start + g.len) {
                    continue;
                }
                let (x, y) = centers[j];
                let d = (x - cx).hypot(y - cy);
                let sides = [y < cy, y > cy, x < cx, x > cx];
                for (slot, inside) in best.iter_mut().zip(sides) {
                    if inside && slot.is_none_or(|(bd, _)| d < bd) {
                        *slot = Some((d, j));
                    }
                }
            }
            best.map(|b| b.map(|(_, j)| j))
        })
        .collect()
}

fn absent_group(prefix: &str) -> impl Iterator<Item = Feature> + '_ {
    TEXT_FEATURES.iter().chain(&NUMERIC_FEATURES).chain(&BOOLEAN_FEATURES).map(move |n| Feature {
        prefix: prefix.into(),
        name: n.to_string(),
        value: FeatureValue::Absent,
    })
}

/// The 5M-entry vector for N-gram `idx`, given per-N-gram features and neighbors.
pub fn concat_with(idx: usize, features: &[NgramFeatures], neighbors: &[[Option<usize>; 4]]) -> FeatureVector {
    let mut out = features[idx].to_vector(GROUPS[0]).0;
    for (prefix, n) in GROUPS[1..].iter().zip(neighbors[idx]) {
        match n {
            Some(j) => out.extend(features[j].to_vector(prefix).0),
            None => out.extend(absent_group(prefix)),
        }
    }
    FeatureVector(out)
}

pub fn context_concat(idx: usize, ngrams: &[NGram], doc: &Document, features: &[NgramFeatures]) -> FeatureVector {
    concat_with(idx, features, &nearest_neighbors(doc, ngrams))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::compute::{FeatureCalculator, FEATURE_COUNT};
    use crate::features::lexicon::Lexicons;
    use crate::features::ngram::make_ngrams;
    use crate::testutil::doc_from_lines;

    #[test]
    fn single_ngram_gets_four_absent_groups() {
        let doc = doc_from_lines(&[&["alone"]]);
        let ngrams = make_ngrams(&doc, 4);
        let calc = FeatureCalculator::new(&doc, Lexicons::builtin());
        let feats: Vec<_> = ngrams.iter().map(|g| calc.compute(g)).collect();
        let v = context_concat(0, &ngrams, &doc, &feats);
        assert_eq!(v.len(), 5 * FEATURE_COUNT);
        let absent = v.0.iter().filter(|f| f.value == FeatureValue::Absent).count();
        assert_eq!(absent, 4 * FEATURE_COUNT);
        assert!(v.get("top.RawText").is_some());
    }

    #[test]
    fn grid_center_picks_orthogonal_neighbors() {
        let doc = doc_from_lines(&[&["a", "b", "c"], &["d", "e", "f"], &["g", "h", "i"]]);
        let ngrams = make_ngrams(&doc, 1);
        let nn = nearest_neighbors(&doc, &ngrams);
        let center = ngrams.iter().position(|g| g.text == "e").unwrap();
        let names: Vec<&str> = nn[center].iter().map(|n| ngrams[n.unwrap()].text.as_str()).collect();
        assert_eq!(names, ["b", "h", "d", "f"]);

        // brute-force oracle over the 8 surrounding cells
        let (cx, cy) = ngrams[center].center(&doc);
        let preds: [fn(f64, f64, f64, f64) -> bool; 4] =
            [|_, y, _, cy| y < cy, |_, y, _, cy| y > cy, |x, _, cx, _| x < cx, |x, _, cx, _| x > cx];
        for (dir, pred) in preds.iter().enumerate() {
            let best = (0..ngrams.len())
                .filter(|&j| j != center)
                .filter(|&j| {
                    let (x, y) = ngrams[j].center(&doc);
                    pred(x, y, cx, cy)
                })
                .min_by(|&a, &b| {
                    let d = |j: usize| {
                        let (x, y) = ngrams[j].center(&doc);
                        (x - cx).hypot(y - cy)
                    };
                    d(a).total_cmp(&d(b))
                });
            assert_eq!(nn[center][dir], best);
        }
    }

    #[test]
    fn overlapping_ngrams_are_not_neighbors() {
        let doc = doc_from_lines(&[&["Total", "12.00"]]);
        let ngrams = make_ngrams(&doc, 4);
        let nn = nearest_neighbors(&doc, &ngrams);
        let own = ngrams.iter().position(|g| g.text == "12.00").unwrap();
        assert_eq!(nn[own][2].map(|j| ngrams[j].text.as_str()), Some("Total"));
    }
}
