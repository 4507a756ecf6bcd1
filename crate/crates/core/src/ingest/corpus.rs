//! On-disk corpora: `manifest.json` plus one positional-text file per document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::PositionalTextFile;
use super::synth::{LabeledPair, NoiseLog};
use crate::error::Result;
use crate::model::Invoice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestEntry {
    pub doc_id: String,
    pub sender_id: String,
    /// Path of the document file relative to the manifest.
    pub document: String,
    pub truth: Invoice,
    #[serde(default)]
    pub noise: NoiseLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

fn file_name(doc_id: &str) -> String {
    let safe: String = doc_id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    format!("docs/{safe}.json")
}

pub fn write_corpus(dir: &Path, pairs: &[LabeledPair]) -> Result<Manifest> {
    fs::create_dir_all(dir.join("docs"))?;
    let mut entries = Vec::with_capacity(pairs.len());
    for p in pairs {
        let rel = file_name(p.doc.doc_id());
        fs::write(dir.join(&rel), serde_json::to_string(&p.source)?)?;
        entries.push(ManifestEntry {
            doc_id: p.doc.doc_id().into(),
            sender_id: p.doc.sender_id().into(),
            document: rel,
            truth: p.truth.clone(),
            noise: p.noise.clone(),
        });
    }
    let manifest = Manifest { pairs: entries };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_corpus(dir: &Path) -> Result<Vec<LabeledPair>> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    manifest
        .pairs
        .into_iter()
        .map(|e| {
            let source: PositionalTextFile = serde_json::from_slice(&fs::read(dir.join(&e.document))?)?;
            LabeledPair::from_source(source, e.truth, e.noise)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth::{generate_corpus, CorpusSpec};

    #[test]
    fn disk_round_trip_is_exact() {
        let pairs = generate_corpus(&CorpusSpec { num_templates: 3, docs_per_template: [2, 2], ..CorpusSpec::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &pairs).unwrap();
        assert_eq!(read_corpus(dir.path()).unwrap(), pairs);
    }
}
