//! Training data from (document, invoice) pairs: labeled N-grams and IOB word tags.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::features::compute::{FeatureCalculator, NgramFeatures};
use crate::features::lexicon::Lexicons;
use crate::features::ngram::make_ngrams;
use crate::features::parse::parse_field;
use crate::model::{Document, FieldType, Invoice, IobTag, NGram, ParserKind};

/// N-grams longer than this are only emitted when they match a value.
pub const MAX_NGRAM: usize = 4;

/// An N-gram with its field labels, either positives or exactly `{Undefined}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledNgram {
    pub ngram: NGram,
    pub labels: Vec<FieldType>,
}

impl LabeledNgram {
    pub fn is_positive(&self) -> bool {
        self.labels.first().is_some_and(|f| *f != FieldType::Undefined)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgramExample {
    pub ngram: NGram,
    pub labels: Vec<FieldType>,
    pub features: NgramFeatures,
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Whether `text` renders `value` for `field`. Ids compare with whitespace removed.
pub fn matches_value(field: FieldType, text: &str, value: &str) -> bool {
    let parsed = parse_field(field, text);
    match parsed.value() {
        Some(v) if field.parser() == Some(ParserKind::FreeTextId) => squash(v) == squash(value),
        Some(v) => v == value,
        None => false,
    }
}

/// Maximum N-gram length searched for a value: its word count plus two.
pub fn max_n_for(value: &str) -> usize {
    value.split_whitespace().count() + 2
}

/// Labels every N-gram of the document. Output is in document order: by start
/// word, then length. Positives may be longer than [`MAX_NGRAM`].
pub fn label_ngrams(doc: &Document, truth: &Invoice) -> Vec<LabeledNgram> {
    let targets: Vec<(FieldType, &str, usize)> = truth.iter().filter_map(|(f, v)| v.map(|v| (f, v, max_n_for(v)))).collect();
    let longest = targets.iter().map(|t| t.2).max().unwrap_or(0).max(MAX_NGRAM);
    let mut out = Vec::new();
    for g in make_ngrams(doc, longest) {
        let labels: Vec<FieldType> =
            targets.iter().filter(|(f, v, max_n)| g.len <= *max_n && matches_value(*f, &g.text, v)).map(|t| t.0).collect();
        if !labels.is_empty() {
            out.push(LabeledNgram { ngram: g, labels });
        } else if g.len <= MAX_NGRAM {
            out.push(LabeledNgram { ngram: g, labels: vec![FieldType::Undefined] });
        }
    }
    out
}

/// Labeled N-grams with their feature tables.
pub fn extract_training_data(doc: &Document, truth: &Invoice, lex: &Lexicons) -> Vec<NgramExample> {
    let calc = FeatureCalculator::new(doc, lex);
    label_ngrams(doc, truth)
        .into_iter()
        .map(|l| NgramExample { features: calc.compute(&l.ngram), ngram: l.ngram, labels: l.labels })
        .collect()
}

/// Per-word tag sets; a word with no span carries `{O}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IobSequence {
    pub doc_id: String,
    pub tags: Vec<Vec<IobTag>>,
}

/// Converts positive spans to word tags. Among spans of one field that
/// overlap, only the longest survives (leftmost on ties).
pub fn to_iob_sequence(doc: &Document, labeled: &[LabeledNgram]) -> IobSequence {
    let mut by_field: BTreeMap<FieldType, Vec<(usize, usize)>> = BTreeMap::new();
    for l in labeled.iter().filter(|l| l.is_positive()) {
        for f in &l.labels {
            by_field.entry(*f).or_default().push((l.ngram.start, l.ngram.len));
        }
    }
    let mut tags: Vec<Vec<IobTag>> = vec![Vec::new(); doc.len()];
    for (field, mut spans) in by_field {
        spans.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut taken = vec![false; doc.len()];
        for (start, len) in spans {
            if taken[start..start + len].iter().any(|t| *t) {
                continue;
            }
            for (k, i) in (start..start + len).enumerate() {
                taken[i] = true;
                tags[i].push(if k == 0 { IobTag::Begin(field) } else { IobTag::Inside(field) });
            }
        }
    }
    for t in &mut tags {
        if t.is_empty() {
            t.push(IobTag::Outside);
        }
        t.sort();
    }
    IobSequence { doc_id: doc.doc_id().into(), tags }
}

/// A field span recovered from word tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub field: FieldType,
    pub start: usize,
    pub len: usize,
}

/// Groups tags into spans per field: `B-f` opens a span, following `I-f`
/// words extend it, and an `I-f` without an open span is dropped. Chunks are
/// ordered by start, then field.
pub fn chunk(tags: &[Vec<IobTag>]) -> Vec<Chunk> {
    let mut open: BTreeMap<FieldType, Chunk> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, word) in tags.iter().enumerate() {
        let continuing: Vec<FieldType> = word.iter().filter_map(|t| if let IobTag::Inside(f) = t { Some(*f) } else { None }).collect();
        // spans not continued on this word are finished
        let finished: Vec<FieldType> = open.keys().copied().filter(|f| !continuing.contains(f)).collect();
        for f in finished {
            out.push(open.remove(&f).unwrap());
        }
        for f in continuing {
            if let Some(c) = open.get_mut(&f) {
                c.len += 1;
            }
        }
        for t in word {
            if let IobTag::Begin(f) = t {
                if let Some(c) = open.remove(f) {
                    out.push(c);
                }
                open.insert(*f, Chunk { field: *f, start: i, len: 1 });
            }
        }
    }
    out.extend(open.into_values());
    out.sort_by_key(|c| (c.start, c.field, c.len));
    out
}

/// Chunks over single tags, as produced by an argmax decision per word.
pub fn chunk_single(tags: &[IobTag]) -> Vec<Chunk> {
    let sets: Vec<Vec<IobTag>> = tags.iter().map(|t| vec![*t]).collect();
    chunk(&sets)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct NgramLine<'a> {
    doc_id: &'a str,
    start: usize,
    len: usize,
    text: &'a str,
    labels: &'a [FieldType],
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<&'a NgramFeatures>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SequenceLine<'a> {
    doc_id: &'a str,
    words: Vec<&'a str>,
    tags: Vec<Vec<String>>,
}

/// One JSON object per labeled N-gram: `docId`, `start`, `len`, `text`, `labels`
/// and, when present, the `features` table.
pub fn write_ngram_jsonl(
    out: &mut impl Write,
    doc: &Document,
    labeled: &[LabeledNgram],
    features: Option<&[NgramFeatures]>,
) -> std::io::Result<()> {
    for (i, l) in labeled.iter().enumerate() {
        let line = NgramLine {
            doc_id: doc.doc_id(),
            start: l.ngram.start,
            len: l.ngram.len,
            text: &l.ngram.text,
            labels: &l.labels,
            features: features.map(|f| &f[i]),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One JSON object per document: `docId`, `words` and per-word `tags` such as `"B-Total"`.
pub fn write_sequence_jsonl(out: &mut impl Write, doc: &Document, seq: &IobSequence) -> std::io::Result<()> {
    let line = SequenceLine {
        doc_id: doc.doc_id(),
        words: doc.words().iter().map(|w| w.text.as_str()).collect(),
        tags: seq.tags.iter().map(|ts| ts.iter().map(ToString::to_string).collect()).collect(),
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")
}
