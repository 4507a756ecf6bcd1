use crate::model::{Document, NGram};

/// All spans of 1..=max_n consecutive words on each line, line by line,
/// ordered by start word and then length.
pub fn make_ngrams(doc: &Document, max_n: usize) -> Vec<NGram> {
    let mut out = Vec::new();
    for line in doc.lines() {
        for start in line.clone() {
            for len in 1..=max_n.min(line.end - start) {
                out.push(NGram::from_span(doc, start, len));
            }
        }
    }
    out
}

/// Uppercase to `X`, lowercase to `x`, digits to `0`, whitespace runs to one space, anything else to `?`.
pub fn text_pattern(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
            continue;
        }
        in_space = false;
        out.push(if c.is_ascii_digit() {
            '0'
        } else if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else {
            '?'
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::doc_from_lines;
    use proptest::prelude::*;

    #[test]
    fn counts() {
        let doc = doc_from_lines(&[&["Total", "Amount", ":", "12"]]);
        assert_eq!(make_ngrams(&doc, 4).len(), 10);
        let doc = doc_from_lines(&[&["x"]]);
        assert_eq!(make_ngrams(&doc, 4).len(), 1);
        let doc = doc_from_lines(&[&["a", "b", "c", "d", "e"]]);
        assert_eq!(make_ngrams(&doc, 2).len(), 9);
    }

    #[test]
    fn ngrams_stay_on_their_line() {
        let doc = doc_from_lines(&[&["a", "b"], &["c", "d", "e"]]);
        for g in make_ngrams(&doc, 4) {
            let lines: std::collections::BTreeSet<_> = doc.words()[g.range()].iter().map(|w| w.line).collect();
            assert_eq!(lines.len(), 1);
        }
    }

    #[test]
    fn patterns() {
        assert_eq!(text_pattern("Inv-2016"), "Xxx?0000");
        assert_eq!(text_pattern("100,00"), "000?00");
        assert_eq!(text_pattern("A  b"), "X x");
        assert_eq!(text_pattern("Beløb"), "Xxxxx");
    }

    proptest! {
        #[test]
        fn count_matches_formula(lens in proptest::collection::vec(1usize..9, 1..6), max_n in 1usize..6) {
            let texts: Vec<Vec<String>> = lens.iter().map(|&n| (0..n).map(|i| format!("w{i}")).collect()).collect();
            let refs: Vec<Vec<&str>> = texts.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
            let lines: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
            let doc = doc_from_lines(&lines);
            let expected: usize = lens.iter().map(|&w| (1..=max_n.min(w)).map(|n| w - n + 1).sum::<usize>()).sum();
            prop_assert_eq!(make_ngrams(&doc, max_n).len(), expected);
        }

        #[test]
        fn pattern_idempotent(s in "\\PC{0,20}") {
            let p = text_pattern(&s);
            prop_assert_eq!(text_pattern(&p), p);
        }
    }
}
