//! Shared document, field and label vocabulary.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positioned word. Coordinates are normalized to the page, `page_width`
/// and `page_height` keep the original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub page: usize,
    pub line: usize,
    pub pos_in_line: usize,
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    pub page_width: f64,
    pub page_height: f64,
}

impl Word {
    pub fn validate(&self) -> Result<()> {
        let path = format!("page {} line {} pos {}", self.page, self.line, self.pos_in_line);
        let bad = |reason: &str| Err(Error::InvalidWord { path: path.clone(), reason: reason.into() });
        if self.text.trim().is_empty() {
            return bad("empty text");
        }
        let coords = [self.left, self.top, self.right, self.bottom];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return bad("coordinates outside [0,1]");
        }
        if self.left >= self.right || self.top >= self.bottom {
            return bad("degenerate box");
        }
        if !(self.page_width > 0.0 && self.page_height > 0.0) {
            return bad("non-positive page dimensions");
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    fn key(&self) -> (usize, usize, usize) {
        (self.page, self.line, self.pos_in_line)
    }
}

/// Sorts words by (page, line, position in line).
///
/// The sort is stable; two words with the same position triple are rejected.
pub fn reading_order(mut words: Vec<Word>) -> Result<Vec<Word>> {
    words.sort_by_key(Word::key);
    if let Some(pair) = words.windows(2).find(|w| w[0].key() == w[1].key()) {
        let (page, line, pos) = pair[0].key();
        return Err(Error::DuplicatePosition { page, line, pos });
    }
    Ok(words)
}

/// A document in reading order. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    doc_id: String,
    sender_id: String,
    words: Vec<Word>,
    lines: Vec<Range<usize>>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, sender_id: impl Into<String>, words: Vec<Word>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyDocument);
        }
        for w in &words {
            w.validate()?;
        }
        let words = reading_order(words)?;

        let mut lines: Vec<Range<usize>> = Vec::new();
        let mut expected = (0usize, 0usize);
        for (i, w) in words.iter().enumerate() {
            match lines.last_mut() {
                Some(r) if words[r.start].page == w.page && words[r.start].line == w.line => r.end = i + 1,
                _ => {
                    let next = if w.page == expected.0 { expected.1 } else { 0 };
                    if w.line != next {
                        return Err(Error::NonContiguousLines { page: w.page, line: w.line });
                    }
                    expected = (w.page, w.line + 1);
                    lines.push(i..i + 1);
                }
            }
        }

        Ok(Document { doc_id: doc_id.into(), sender_id: sender_id.into(), words, lines })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn sender_id(&self) -> &str {
        &self.sender_id
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Word index ranges of each line, in reading order.
    pub fn lines(&self) -> &[Range<usize>] {
        &self.lines
    }

    /// Index into `lines()` of the line that holds word `idx`.
    pub fn line_of(&self, idx: usize) -> usize {
        self.lines.partition_point(|r| r.end <= idx)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// How a field's text is turned into a canonical value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParserKind {
    Amount,
    Date,
    CurrencyCode,
    FreeTextId,
    Percent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FieldType {
    Number,
    Date,
    Currency,
    OrderId,
    Total,
    LineTotal,
    TaxTotal,
    TaxPercent,
    Undefined,
}

impl FieldType {
    /// The eight target fields, in canonical order.
    pub const TARGETS: [FieldType; 8] = [
        FieldType::Number,
        FieldType::Date,
        FieldType::Currency,
        FieldType::OrderId,
        FieldType::Total,
        FieldType::LineTotal,
        FieldType::TaxTotal,
        FieldType::TaxPercent,
    ];

    /// Fields assigned one-to-one with the Hungarian algorithm.
    pub const INDEPENDENT: [FieldType; 4] = [FieldType::Number, FieldType::Date, FieldType::Currency, FieldType::OrderId];

    /// Fields reconciled jointly by the totals cost function.
    pub const TOTALS: [FieldType; 4] = [FieldType::Total, FieldType::LineTotal, FieldType::TaxTotal, FieldType::TaxPercent];

    /// Position in `TARGETS`; `Undefined` maps to 8.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FieldType> {
        FieldType::TARGETS.get(i).copied()
    }

    pub fn parser(self) -> Option<ParserKind> {
        Some(match self {
            FieldType::Number | FieldType::OrderId => ParserKind::FreeTextId,
            FieldType::Date => ParserKind::Date,
            FieldType::Currency => ParserKind::CurrencyCode,
            FieldType::Total | FieldType::LineTotal | FieldType::TaxTotal => ParserKind::Amount,
            FieldType::TaxPercent => ParserKind::Percent,
            FieldType::Undefined => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldType::Number => "Number",
            FieldType::Date => "Date",
            FieldType::Currency => "Currency",
            FieldType::OrderId => "OrderId",
            FieldType::Total => "Total",
            FieldType::LineTotal => "LineTotal",
            FieldType::TaxTotal => "TaxTotal",
            FieldType::TaxPercent => "TaxPercent",
            FieldType::Undefined => "Undefined",
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FieldType::TARGETS
            .iter()
            .chain(std::iter::once(&FieldType::Undefined))
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown field {s:?}")))
    }
}

/// Canonical invoice record: one optional value per target field.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Invoice {
    values: [Option<String>; 8],
}

impl Invoice {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, field: FieldType) -> Option<&str> {
        self.values.get(field.index())?.as_deref()
    }

    /// Sets a field. Panics on `Undefined`, which has no slot.
    pub fn set(&mut self, field: FieldType, value: impl Into<String>) {
        assert!(field != FieldType::Undefined, "Undefined is not an invoice field");
        self.values[field.index()] = Some(value.into());
    }

    pub fn clear(&mut self, field: FieldType) {
        if let Some(slot) = self.values.get_mut(field.index()) {
            *slot = None;
        }
    }

    pub fn is_present(&self, field: FieldType) -> bool {
        self.get(field).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FieldType, Option<&str>)> {
        FieldType::TARGETS.iter().map(move |&f| (f, self.get(f)))
    }
}

#[derive(Serialize, Deserialize)]
struct FieldEntry {
    value: String,
    present: bool,
}

impl Serialize for Invoice {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(8))?;
        for (f, v) in self.iter() {
            let entry = FieldEntry { value: v.unwrap_or_default().to_string(), present: v.is_some() };
            map.serialize_entry(f.name(), &entry)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Invoice {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = std::collections::BTreeMap::<String, FieldEntry>::deserialize(deserializer)?;
        let mut inv = Invoice::new();
        for (name, entry) in raw {
            let field: FieldType = name.parse().map_err(serde::de::Error::custom)?;
            if field == FieldType::Undefined {
                return Err(serde::de::Error::custom("Undefined cannot carry a value"));
            }
            if entry.present {
                inv.set(field, entry.value);
            }
        }
        Ok(inv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IobTag {
    Outside,
    Begin(FieldType),
    Inside(FieldType),
}

impl fmt::Display for IobTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IobTag::Outside => f.write_str("O"),
            IobTag::Begin(t) => write!(f, "B-{t}"),
            IobTag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

/// The IOB tag universe for a field configuration: `O`, then `B-f`, `I-f` per field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    fields: Vec<FieldType>,
}

impl Default for TagSet {
    fn default() -> Self {
        TagSet { fields: FieldType::TARGETS.to_vec() }
    }
}

impl TagSet {
    pub fn new(fields: &[FieldType]) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for f in fields {
            if *f == FieldType::Undefined || !seen.insert(*f) {
                return Err(Error::Config(format!("invalid tag field list {fields:?}")));
            }
        }
        Ok(TagSet { fields: fields.to_vec() })
    }

    pub fn fields(&self) -> &[FieldType] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        2 * self.fields.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, tag: IobTag) -> Option<usize> {
        let pos = |f: FieldType| self.fields.iter().position(|&g| g == f);
        match tag {
            IobTag::Outside => Some(0),
            IobTag::Begin(f) => pos(f).map(|i| 1 + 2 * i),
            IobTag::Inside(f) => pos(f).map(|i| 2 + 2 * i),
        }
    }

    pub fn tag(&self, index: usize) -> Option<IobTag> {
        if index == 0 {
            return Some(IobTag::Outside);
        }
        let f = *self.fields.get((index - 1) / 2)?;
        Some(if index % 2 == 1 { IobTag::Begin(f) } else { IobTag::Inside(f) })
    }

    pub fn tags(&self) -> impl Iterator<Item = IobTag> + '_ {
        (0..self.len()).filter_map(|i| self.tag(i))
    }
}

/// A span of 1..=maxN consecutive words on one line, by word index into its document.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NGram {
    pub start: usize,
    pub len: usize,
    pub text: String,
}

impl NGram {
    pub fn from_span(doc: &Document, start: usize, len: usize) -> NGram {
        let text = doc.words()[start..start + len].iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
        NGram { start, len, text }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }

    /// Bounding box (left, top, right, bottom) in normalized coordinates.
    pub fn bbox(&self, doc: &Document) -> (f64, f64, f64, f64) {
        let ws = &doc.words()[self.range()];
        ws.iter().fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |(l, t, r, b), w| {
            (l.min(w.left), t.min(w.top), r.max(w.right), b.max(w.bottom))
        })
    }

    pub fn center(&self, doc: &Document) -> (f64, f64) {
        let (l, t, r, b) = self.bbox(doc);
        ((l + r) / 2.0, (t + b) / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn word(text: &str, page: usize, line: usize, pos: usize) -> Word {
        let left = 0.05 + pos as f64 * 0.1;
        let top = 0.05 + line as f64 * 0.03;
        Word {
            text: text.into(),
            page,
            line,
            pos_in_line: pos,
            left,
            top,
            right: left + 0.08,
            bottom: top + 0.02,
            page_width: 600.0,
            page_height: 800.0,
        }
    }

    #[test]
    fn reading_order_swaps_positions() {
        let ws = reading_order(vec![word("b", 0, 0, 1), word("a", 0, 0, 0)]).unwrap();
        assert_eq!(ws[0].text, "a");
        assert_eq!(ws[1].text, "b");
    }

    #[test]
    fn reading_order_follows_line_index_not_geometry() {
        let mut low = word("low", 0, 0, 0);
        low.top = 0.9;
        low.bottom = 0.92;
        let mut high = word("high", 0, 1, 0);
        high.top = 0.1;
        high.bottom = 0.12;
        let ws = reading_order(vec![high, low]).unwrap();
        assert_eq!(ws[0].text, "low");
    }

    #[test]
    fn pages_precede() {
        let ws = reading_order(vec![word("c", 2, 0, 0), word("b", 1, 0, 0), word("a", 0, 3, 5)]).unwrap();
        let pages: Vec<_> = ws.iter().map(|w| w.page).collect();
        assert_eq!(pages, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_position_rejected() {
        let err = reading_order(vec![word("a", 0, 0, 0), word("b", 0, 0, 0)]).unwrap_err();
        assert!(matches!(err, Error::DuplicatePosition { .. }));
    }

    #[test]
    fn document_requires_contiguous_lines() {
        let err = Document::new("d", "s", vec![word("a", 0, 0, 0), word("b", 0, 2, 0)]).unwrap_err();
        assert!(matches!(err, Error::NonContiguousLines { line: 2, .. }));
        let doc = Document::new("d", "s", vec![word("a", 0, 0, 0), word("b", 1, 0, 0), word("c", 1, 1, 0)]).unwrap();
        assert_eq!(doc.lines().len(), 3);
        assert_eq!(doc.line_of(2), 2);
    }

    #[test]
    fn tag_universe_size() {
        assert_eq!(TagSet::default().len(), 17);
        let ts = TagSet::new(&[FieldType::Total, FieldType::Date]).unwrap();
        assert_eq!(ts.len(), 5);
        for (i, t) in ts.tags().enumerate() {
            assert_eq!(ts.index(t), Some(i));
        }
        assert_eq!(ts.tag(3), Some(IobTag::Begin(FieldType::Date)));
    }

    #[test]
    fn invoice_json_carries_present_flags() {
        let mut inv = Invoice::new();
        inv.set(FieldType::Total, "12.00");
        let json = serde_json::to_value(&inv).unwrap();
        assert_eq!(json["Total"]["present"], true);
        assert_eq!(json["Date"]["present"], false);
        assert_eq!(json["Date"]["value"], "");
        let back: Invoice = serde_json::from_value(json).unwrap();
        assert_eq!(back, inv);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reading_order_is_idempotent_permutation(keys in proptest::collection::btree_set((0usize..3, 0usize..5, 0usize..6), 1..30)) {
                let mut ws: Vec<Word> = keys.iter().map(|&(p, l, i)| word(&format!("{p}-{l}-{i}"), p, l, i)).collect();
                ws.reverse();
                let once = reading_order(ws.clone()).unwrap();
                let twice = reading_order(once.clone()).unwrap();
                prop_assert_eq!(&once, &twice);
                let mut a: Vec<_> = once.iter().map(|w| w.text.clone()).collect();
                let mut b: Vec<_> = ws.iter().map(|w| w.text.clone()).collect();
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn tag_count_tracks_fields(n in 0usize..=8) {
                let ts = TagSet::new(&FieldType::TARGETS[..n]).unwrap();
                prop_assert_eq!(ts.len(), 2 * n + 1);
                prop_assert_eq!(ts.tags().count(), 2 * n + 1);
            }
        }
    }
}
