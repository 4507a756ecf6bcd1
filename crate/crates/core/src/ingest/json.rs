//! The positional-text JSON format.
//!
//! ```json
//! {"docId": "d1", "senderId": "s1",
//!  "pages": [{"width": 600, "height": 800,
//!             "lines": [{"words": [{"text": "Total", "bbox": [10, 10, 60, 20]}]}]}]}
//! ```
//!
//! Boxes are `[left, top, right, bottom]` in page units and are normalized on load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Document, Word};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PositionalTextFile {
    pub doc_id: String,
    pub sender_id: String,
    pub pages: Vec<PageRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub width: f64,
    pub height: f64,
    pub lines: Vec<LineRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub words: Vec<WordRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordRecord {
    pub text: String,
    pub bbox: [f64; 4],
}

impl PositionalTextFile {
    pub fn to_document(&self) -> Result<Document> {
        let mut words = Vec::new();
        for (p, page) in self.pages.iter().enumerate() {
            if !(page.width > 0.0 && page.height > 0.0) || !page.width.is_finite() || !page.height.is_finite() {
                return Err(Error::InvalidBox { path: format!("pages[{p}]"), reason: "page width and height must be positive".into() });
            }
            for (l, line) in page.lines.iter().enumerate() {
                for (i, w) in line.words.iter().enumerate() {
                    let path = format!("pages[{p}].lines[{l}].words[{i}]");
                    let [left, top, right, bottom] = w.bbox;
                    let reason = if w.bbox.iter().any(|c| !c.is_finite()) {
                        Some("non-finite coordinate")
                    } else if right <= left || bottom <= top {
                        Some("right/bottom must exceed left/top")
                    } else if left < 0.0 || top < 0.0 || right > page.width || bottom > page.height {
                        Some("box lies outside the page")
                    } else {
                        None
                    };
                    if let Some(reason) = reason {
                        return Err(Error::InvalidBox { path, reason: reason.into() });
                    }
                    if w.text.trim().is_empty() {
                        return Err(Error::InvalidWord { path, reason: "empty text".into() });
                    }
                    words.push(Word {
                        text: w.text.clone(),
                        page: p,
                        line: l,
                        pos_in_line: i,
                        left: left / page.width,
                        top: top / page.height,
                        right: right / page.width,
                        bottom: bottom / page.height,
                        page_width: page.width,
                        page_height: page.height,
                    });
                }
            }
        }
        // Empty lines would leave gaps in the line numbering; renumber around them.
        renumber_lines(&mut words);
        Document::new(self.doc_id.clone(), self.sender_id.clone(), words)
    }

    /// Inverse of [`to_document`](Self::to_document), up to normalization rounding.
    pub fn from_document(doc: &Document) -> Self {
        let mut pages: Vec<PageRecord> = Vec::new();
        for w in doc.words() {
            while pages.len() <= w.page {
                pages.push(PageRecord { width: w.page_width, height: w.page_height, lines: Vec::new() });
            }
            let page = &mut pages[w.page];
            while page.lines.len() <= w.line {
                page.lines.push(LineRecord { words: Vec::new() });
            }
            page.lines[w.line].words.push(WordRecord {
                text: w.text.clone(),
                bbox: [w.left * w.page_width, w.top * w.page_height, w.right * w.page_width, w.bottom * w.page_height],
            });
        }
        PositionalTextFile { doc_id: doc.doc_id().into(), sender_id: doc.sender_id().into(), pages }
    }
}

fn renumber_lines(words: &mut [Word]) {
    let mut last: Option<(usize, usize)> = None;
    let mut next = 0;
    for w in words.iter_mut() {
        match last {
            Some((p, l)) if p == w.page && l == w.line => {}
            Some((p, _)) if p == w.page => {
                last = Some((w.page, w.line));
                next += 1;
            }
            _ => {
                last = Some((w.page, w.line));
                next = 0;
            }
        }
        w.line = next;
    }
}

pub fn load_document(json: &str) -> Result<Document> {
    let file: PositionalTextFile = serde_json::from_str(json)?;
    file.to_document()
}

pub fn load_document_bytes(bytes: &[u8]) -> Result<Document> {
    let file: PositionalTextFile = serde_json::from_slice(bytes)?;
    file.to_document()
}

pub fn save_document(doc: &Document) -> String {
    serde_json::to_string_pretty(&PositionalTextFile::from_document(doc)).expect("serializable")
}
