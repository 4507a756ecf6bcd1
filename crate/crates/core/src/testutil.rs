use crate::model::{Document, Word};

/// One page, lines laid out top to bottom, words 0.12 apart horizontally.
pub(crate) fn doc_from_lines(lines: &[&[&str]]) -> Document {
    let mut words = Vec::new();
    for (l, line) in lines.iter().enumerate() {
        for (i, t) in line.iter().enumerate() {
            let left = 0.02 + i as f64 * 0.12;
            let top = 0.02 + l as f64 * 0.04;
            words.push(Word {
                text: t.to_string(),
                page: 0,
                line: l,
                pos_in_line: i,
                left,
                top,
                right: left + 0.1,
                bottom: top + 0.02,
                page_width: 600.0,
                page_height: 800.0,
            });
        }
    }
    Document::new("d", "s", words).unwrap()
}
