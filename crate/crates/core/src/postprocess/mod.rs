//! From classifier scores to an invoice: parser filtering, one-to-one
//! assignment of the independent fields, joint totals reconciliation.

pub mod hungarian;
pub mod totals;
pub mod xml;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use totals::{assign_totals, Slot, TotalsAssignment, TotalsCandidate, TotalsConfig};
pub use xml::{from_xml, to_xml};

use crate::autolabel::label_ngrams;
use crate::features::parse::{amount_cents, parse_field};
use crate::model::{Document, FieldType, Invoice, NGram};

/// A classifier's belief that an N-gram holds a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub ngram: NGram,
    pub field: FieldType,
    pub prob: f64,
}

/// A scored N-gram whose text parses for its field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub ngram: NGram,
    pub field: FieldType,
    pub prob: f64,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PostConfig {
    /// Candidates below this probability are dropped.
    pub floor: f64,
    pub totals: TotalsConfig,
}

impl Default for PostConfig {
    fn default() -> Self {
        PostConfig { floor: 0.05, totals: TotalsConfig::default() }
    }
}

pub fn filter_candidates(scored: &[Scored], floor: f64) -> Vec<Candidate> {
    scored
        .iter()
        .filter(|s| s.field != FieldType::Undefined && s.prob >= floor)
        .filter_map(|s| {
            let parsed = parse_field(s.field, &s.ngram.text);
            parsed.value().map(|v| Candidate { ngram: s.ngram.clone(), field: s.field, prob: s.prob, value: v.to_string() })
        })
        .collect()
}

/// Where an extracted value came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum FieldSource {
    Ngram {
        start: usize,
        len: usize,
        text: String,
        prob: f64,
    },
    /// Derived arithmetically from the other totals.
    Computed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Extraction {
    pub invoice: Invoice,
    pub sources: BTreeMap<FieldType, FieldSource>,
    pub totals_cost: f64,
    pub totals_consistent: bool,
}

fn source(c: &Candidate) -> FieldSource {
    FieldSource::Ngram { start: c.ngram.start, len: c.ngram.len, text: c.ngram.text.clone(), prob: c.prob }
}

/// Assigns the independent fields: columns are distinct N-grams, so no N-gram
/// fills two of them. Returns indices into `cands`.
pub fn assign_independent(cands: &[Candidate]) -> BTreeMap<FieldType, usize> {
    let mut spans: Vec<(usize, usize)> =
        cands.iter().filter(|c| FieldType::INDEPENDENT.contains(&c.field)).map(|c| (c.ngram.start, c.ngram.len)).collect();
    spans.sort_unstable();
    spans.dedup();
    // best candidate per (field, span); duplicates keep the higher probability
    let mut cell: BTreeMap<(FieldType, usize), usize> = BTreeMap::new();
    for (i, c) in cands.iter().enumerate() {
        if !FieldType::INDEPENDENT.contains(&c.field) {
            continue;
        }
        let col = spans.binary_search(&(c.ngram.start, c.ngram.len)).expect("collected above");
        let slot = cell.entry((c.field, col)).or_insert(i);
        if cands[*slot].prob < c.prob {
            *slot = i;
        }
    }
    let costs: Vec<Vec<Option<f64>>> = FieldType::INDEPENDENT
        .iter()
        .map(|f| (0..spans.len()).map(|col| cell.get(&(*f, col)).map(|&i| 1.0 - cands[i].prob)).collect())
        .collect();
    let picks = hungarian::assign(&costs, 1.0);
    FieldType::INDEPENDENT.iter().zip(picks).filter_map(|(f, col)| col.map(|col| (*f, cell[&(*f, col)]))).collect()
}

pub fn post_process(scored: &[Scored], config: &PostConfig) -> Extraction {
    let cands = filter_candidates(scored, config.floor);
    let mut invoice = Invoice::new();
    let mut sources = BTreeMap::new();
    for (field, i) in assign_independent(&cands) {
        invoice.set(field, cands[i].value.clone());
        sources.insert(field, source(&cands[i]));
    }

    let slots: [Vec<TotalsCandidate>; 4] = std::array::from_fn(|k| {
        let field = FieldType::TOTALS[k];
        cands
            .iter()
            .enumerate()
            .filter(|(_, c)| c.field == field)
            .filter_map(|(i, c)| amount_cents(&c.value).map(|(value, _)| TotalsCandidate { value, prob: c.prob, id: i }))
            .collect()
    });
    let totals = assign_totals(slots, &config.totals);
    for (k, field) in FieldType::TOTALS.iter().enumerate() {
        match totals.slots[k] {
            Slot::Chosen { id, .. } => {
                invoice.set(*field, totals.canonical(k).expect("chosen"));
                sources.insert(*field, source(&cands[id]));
            }
            Slot::Computed { .. } => {
                invoice.set(*field, totals.canonical(k).expect("computed"));
                sources.insert(*field, FieldSource::Computed);
            }
            Slot::Absent => {}
        }
    }
    Extraction { invoice, sources, totals_cost: totals.cost, totals_consistent: totals.consistent }
}

/// Scores from the true labels: probability 1 for every positive autolabel
/// match, nothing otherwise.
pub fn oracle_classify(doc: &Document, truth: &Invoice) -> Vec<Scored> {
    label_ngrams(doc, truth)
        .into_iter()
        .filter(|l| l.is_positive())
        .flat_map(|l| l.labels.iter().map(|f| Scored { ngram: l.ngram.clone(), field: *f, prob: 1.0 }).collect::<Vec<_>>())
        .collect()
}
