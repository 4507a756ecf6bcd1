//! The per-N-gram feature table: text, numeric and boolean features.

use serde::{Deserialize, Serialize};

use super::lexicon::Lexicons;
use super::ngram::text_pattern;
use super::parse::{amount_cents, parse_date, parse_integer};
use crate::model::{Document, NGram};

pub const TEXT_FEATURES: [&str; 4] = ["RawText", "RawTextLastWord", "TextOfTwoWordsLeft", "TextPatterns"];

pub const NUMERIC_FEATURES: [&str; 17] = [
    "bottomMargin",
    "topMargin",
    "rightMargin",
    "leftMargin",
    "bottomMarginRelative",
    "topMarginRelative",
    "rightMarginRelative",
    "leftMarginRelative",
    "horizontalPosition",
    "verticalPosition",
    "leftAlignment",
    "length",
    "pageHeight",
    "pageWidth",
    "positionOnLine",
    "lineSize",
    "lineWhiteSpace",
];

pub const BOOLEAN_FEATURES: [&str; 9] = [
    "hasDigits",
    "isKnownCity",
    "isKnownCountry",
    "isKnownZip",
    "parsesAsAmount",
    "parsesAsDate",
    "parsesAsNumber",
    "LineMathFeatures.isFactor",
    "LineMathFeatures.isProduct",
];

/// Number of features per N-gram.
pub const FEATURE_COUNT: usize = TEXT_FEATURES.len() + NUMERIC_FEATURES.len() + BOOLEAN_FEATURES.len();

/// Horizontal tolerance, in original page units, for `leftAlignment`.
pub const ALIGNMENT_TOLERANCE: f64 = 5.0;

/// Tolerance for products in the line-math features.
pub const LINE_MATH_TOLERANCE: f64 = 0.005;

/// Sentinel for `TextOfTwoWordsLeft` at the start of a line.
pub const NO_WORD: &str = "<none>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Text(String),
    Num(f64),
    Bool(bool),
    Absent,
}

impl FeatureValue {
    /// Rendering used for hashing: numbers with four decimals, booleans as 0/1.
    pub fn render(&self, out: &mut String) {
        use std::fmt::Write;
        match self {
            FeatureValue::Text(s) => out.push_str(s),
            FeatureValue::Num(x) => {
                let x = if *x == 0.0 { 0.0 } else { *x };
                let _ = write!(out, "{x:.4}");
            }
            FeatureValue::Bool(b) => out.push(if *b { '1' } else { '0' }),
            FeatureValue::Absent => out.push_str("<absent>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    /// Group prefix such as `own` or `left`; empty for a bare vector.
    pub prefix: String,
    pub name: String,
    pub value: FeatureValue,
}

impl Feature {
    pub fn full_name(&self) -> String {
        if self.prefix.is_empty() {
            self.name.clone()
        } else {
            format!("{}.{}", self.prefix, self.name)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<Feature>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, full_name: &str) -> Option<&FeatureValue> {
        self.0.iter().find(|f| f.full_name() == full_name).map(|f| &f.value)
    }

    pub fn num(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            FeatureValue::Num(x) => Some(*x),
            FeatureValue::Bool(b) => Some(f64::from(u8::from(*b))),
            _ => None,
        }
    }
}

/// Typed form of the feature table for one N-gram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgramFeatures {
    pub text: [String; 4],
    pub numeric: [f64; 17],
    pub boolean: [bool; 9],
}

impl NgramFeatures {
    pub fn to_vector(&self, prefix: &str) -> FeatureVector {
        let mut v = Vec::with_capacity(FEATURE_COUNT);
        let mut push = |name: &str, value| v.push(Feature { prefix: prefix.into(), name: name.into(), value });
        for (n, t) in TEXT_FEATURES.iter().zip(&self.text) {
            push(n, FeatureValue::Text(t.clone()));
        }
        for (n, x) in NUMERIC_FEATURES.iter().zip(&self.numeric) {
            push(n, FeatureValue::Num(*x));
        }
        for (n, b) in BOOLEAN_FEATURES.iter().zip(&self.boolean) {
            push(n, FeatureValue::Bool(*b));
        }
        FeatureVector(v)
    }

    /// Numeric then boolean features as reals: the word-level inputs of the sequence model.
    pub fn dense(&self) -> Vec<f64> {
        self.numeric.iter().copied().chain(self.boolean.iter().map(|&b| f64::from(u8::from(b)))).collect()
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        if let Some(i) = NUMERIC_FEATURES.iter().position(|n| *n == name) {
            return Some(self.numeric[i]);
        }
        BOOLEAN_FEATURES.iter().position(|n| *n == name).map(|i| f64::from(u8::from(self.boolean[i])))
    }
}

/// Width of `dense()`.
pub const DENSE_FEATURE_COUNT: usize = NUMERIC_FEATURES.len() + BOOLEAN_FEATURES.len();

struct LineInfo {
    white_space: f64,
    /// (word index, amount in cents)
    amounts: Vec<(usize, i64)>,
}

/// Computes features for many N-grams of one document, sharing per-line work.
pub struct FeatureCalculator<'a> {
    doc: &'a Document,
    lex: &'a Lexicons,
    lines: Vec<LineInfo>,
}

impl<'a> FeatureCalculator<'a> {
    pub fn new(doc: &'a Document, lex: &'a Lexicons) -> Self {
        let words = doc.words();
        let lines = doc
            .lines()
            .iter()
            .map(|r| {
                let ws = &words[r.clone()];
                let (l, t, rt, b) = ws.iter().fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |a, w| {
                    (a.0.min(w.left), a.1.min(w.top), a.2.max(w.right), a.3.max(w.bottom))
                });
                let area = (rt - l) * (b - t);
                let used: f64 = ws.iter().map(|w| w.width() * w.height()).sum();
                let white_space = if area > 0.0 { ((area - used) / area).clamp(0.0, 1.0) } else { 0.0 };
                let amounts = r.clone().filter_map(|i| amount_cents(&words[i].text).map(|(c, _)| (i, c))).collect();
                LineInfo { white_space, amounts }
            })
            .collect();
        FeatureCalculator { doc, lex, lines }
    }

    pub fn compute(&self, g: &NGram) -> NgramFeatures {
        let doc = self.doc;
        let words = doc.words();
        let first = &words[g.start];
        let last = &words[g.start + g.len - 1];
        let line_idx = doc.line_of(g.start);
        let line = &doc.lines()[line_idx];
        let (l, t, r, b) = g.bbox(doc);
        let span = g.range();

        let two_left = g.start.checked_sub(2).filter(|&i| i >= line.start).map_or_else(|| NO_WORD.to_string(), |i| words[i].text.clone());

        let mut below = 1.0 - b;
        let mut above = t;
        let mut right = 1.0 - r;
        let mut left = l;
        let mut aligned = 0usize;
        let left_units = l * first.page_width;
        for (i, w) in words.iter().enumerate() {
            if w.page != first.page || span.contains(&i) {
                continue;
            }
            if ((w.left * w.page_width) - left_units).abs() <= ALIGNMENT_TOLERANCE {
                aligned += 1;
            }
            let (cx, cy) = w.center();
            let h_overlap = w.left < r && w.right > l;
            let v_overlap = w.top < b && w.bottom > t;
            if h_overlap {
                if cy > b {
                    below = below.min((w.top - b).max(0.0));
                } else if cy < t {
                    above = above.min((t - w.bottom).max(0.0));
                }
            }
            if v_overlap {
                if cx > r {
                    right = right.min((w.left - r).max(0.0));
                } else if cx < l {
                    left = left.min((l - w.right).max(0.0));
                }
            }
        }
        let horizontal = left / (left + (r - l) + right);
        let vertical = above / (above + (b - t) + below);

        let line_size = line.len();
        let position_on_line = (g.start - line.start) as f64 / line_size as f64;
        let info = &self.lines[line_idx];

        let own_amount = amount_cents(&g.text);
        let (is_factor, is_product) = match own_amount {
            Some((x, _)) => line_math(x, info.amounts.iter().filter(|(i, _)| !span.contains(i)).map(|&(_, c)| c)),
            None => (false, false),
        };

        NgramFeatures {
            text: [g.text.clone(), last.text.clone(), two_left, text_pattern(&g.text)],
            numeric: [
                b,
                t,
                r,
                l,
                below,
                above,
                right,
                left,
                horizontal,
                vertical,
                aligned as f64,
                g.text.chars().count() as f64,
                first.page_height,
                first.page_width,
                position_on_line,
                line_size as f64,
                info.white_space,
            ],
            boolean: [
                g.text.chars().any(|c| c.is_ascii_digit()),
                self.lex.is_city(&g.text),
                self.lex.is_country(&g.text),
                self.lex.is_zip(&g.text),
                own_amount.is_some_and(|(_, frac)| frac),
                parse_date(&g.text).ok,
                parse_integer(&g.text).ok,
                is_factor,
                is_product,
            ],
        }
    }
}

/// Whether `x` is one factor of a product of two other amounts, and whether it is such a product.
fn line_math(x: i64, others: impl Iterator<Item = i64>) -> (bool, bool) {
    let others: Vec<f64> = others.map(|c| c as f64 / 100.0).collect();
    let x = x as f64 / 100.0;
    let close = |a: f64, b: f64| (a - b).abs() <= LINE_MATH_TOLERANCE + 1e-9;
    let mut factor = false;
    let mut product = false;
    for (i, &p) in others.iter().enumerate() {
        for (j, &q) in others.iter().enumerate() {
            if i == j {
                continue;
            }
            factor |= close(x * p, q);
            product |= i < j && close(p * q, x);
        }
    }
    (factor, product)
}

pub fn compute_features(g: &NGram, doc: &Document, lex: &Lexicons) -> FeatureVector {
    FeatureCalculator::new(doc, lex).compute(g).to_vector("")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ngram::make_ngrams;
    use crate::testutil::doc_from_lines;

    fn find<'a>(ngrams: &'a [NGram], text: &str) -> &'a NGram {
        ngrams.iter().find(|g| g.text == text).unwrap()
    }

    #[test]
    fn thirty_features() {
        let doc = doc_from_lines(&[&["Total", "12.00"]]);
        let g = &make_ngrams(&doc, 4)[0];
        assert_eq!(compute_features(g, &doc, Lexicons::builtin()).len(), FEATURE_COUNT);
        assert_eq!(FEATURE_COUNT, 30);
    }

    #[test]
    fn lone_word_on_line() {
        let doc = doc_from_lines(&[&["Hello"], &["a", "b"]]);
        let fv = compute_features(&make_ngrams(&doc, 4)[0], &doc, Lexicons::builtin());
        assert_eq!(fv.num("positionOnLine"), Some(0.0));
        assert_eq!(fv.num("lineSize"), Some(1.0));
        assert_eq!(fv.num("lineWhiteSpace"), Some(0.0));
        assert_eq!(fv.get("TextOfTwoWordsLeft"), Some(&FeatureValue::Text(NO_WORD.into())));
    }

    #[test]
    fn line_math_factors_and_products() {
        let doc = doc_from_lines(&[&["2.00", "3.00", "6.00"]]);
        let ngrams = make_ngrams(&doc, 4);
        let calc = FeatureCalculator::new(&doc, Lexicons::builtin());
        let f2 = calc.compute(find(&ngrams, "2.00"));
        let f6 = calc.compute(find(&ngrams, "6.00"));
        assert_eq!(f2.value("LineMathFeatures.isFactor"), Some(1.0));
        assert_eq!(f2.value("LineMathFeatures.isProduct"), Some(0.0));
        assert_eq!(f6.value("LineMathFeatures.isProduct"), Some(1.0));
        assert_eq!(f6.value("LineMathFeatures.isFactor"), Some(0.0));
        assert_eq!(f2.value("parsesAsAmount"), Some(1.0));
    }

    #[test]
    fn lexicon_and_text_features() {
        let doc = doc_from_lines(&[&["Shop", "ApS", "Copenhagen", "Inv-2016"]]);
        let ngrams = make_ngrams(&doc, 4);
        let calc = FeatureCalculator::new(&doc, Lexicons::builtin());
        let f = calc.compute(find(&ngrams, "Copenhagen"));
        assert_eq!(f.value("isKnownCity"), Some(1.0));
        assert_eq!(f.text[2], "Shop");
        let f = calc.compute(find(&ngrams, "Copenhagen Inv-2016"));
        assert_eq!(f.text[1], "Inv-2016");
        assert_eq!(f.text[3], "Xxxxxxxxxx Xxx?0000");
        assert_eq!(f.value("hasDigits"), Some(1.0));
        assert_eq!(f.value("isKnownCity"), Some(0.0));
    }

    #[test]
    fn margins_and_relative_distances() {
        // rows 0.04 apart, boxes 0.02 tall, columns 0.12 apart, boxes 0.1 wide
        let doc = doc_from_lines(&[&["a", "b", "c"], &["d", "e", "f"], &["g", "h", "i"]]);
        let ngrams = make_ngrams(&doc, 1);
        let f = FeatureCalculator::new(&doc, Lexicons::builtin()).compute(find(&ngrams, "e"));
        let v = |n| f.value(n).unwrap();
        assert!((v("leftMargin") - 0.14).abs() < 1e-12);
        assert!((v("topMargin") - 0.06).abs() < 1e-12);
        assert!((v("leftMarginRelative") - 0.02).abs() < 1e-12);
        assert!((v("rightMarginRelative") - 0.02).abs() < 1e-12);
        assert!((v("topMarginRelative") - 0.02).abs() < 1e-12);
        assert!((v("bottomMarginRelative") - 0.02).abs() < 1e-12);
        assert!((v("horizontalPosition") - 0.02 / 0.14).abs() < 1e-12);
        assert!((v("positionOnLine") - 1.0 / 3.0).abs() < 1e-12);
        // "b" and "h" share the left edge exactly
        assert_eq!(v("leftAlignment"), 2.0);
        assert_eq!(v("pageWidth"), 600.0);
    }

    #[test]
    fn pure() {
        let doc = doc_from_lines(&[&["Total", "12.00", "EUR"], &["VAT", "3.00"]]);
        for g in make_ngrams(&doc, 4) {
            assert_eq!(compute_features(&g, &doc, Lexicons::builtin()), compute_features(&g, &doc, Lexicons::builtin()));
        }
    }
}
