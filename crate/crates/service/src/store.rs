//! Flat-file training store: `docs/` holds uploaded documents by id,
//! `feedback.jsonl` is the append-only log of accepted invoices, `models/`
//! holds model files and the `ACTIVE` pointer.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ledgerscan::hashing::stable_hash;
use ledgerscan::ingest::json::PositionalTextFile;
use ledgerscan::ingest::synth::{LabeledPair, NoiseLog};
use ledgerscan::pipeline::Model;
use ledgerscan::{Error, Invoice, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSource {
    Ui,
    Api,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeedbackRecord {
    pub doc_id: String,
    pub corrected_invoice: Invoice,
    /// RFC 3339, UTC.
    pub accepted_at: String,
    pub source: FeedbackSource,
}

pub struct Store {
    root: PathBuf,
    // serializes appends and pointer updates
    writer: Mutex<()>,
}

const FEEDBACK: &str = "feedback.jsonl";
const ACTIVE: &str = "ACTIVE";

/// Ids are generated here; anything else is rejected before touching the disk.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("docs"))?;
        fs::create_dir_all(root.join("models"))?;
        OpenOptions::new().create(true).append(true).open(root.join(FEEDBACK))?;
        Ok(Store { root, writer: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_path(&self, id: &str) -> PathBuf {
        self.root.join("docs").join(format!("{id}.json"))
    }

    /// Stores a document under an id derived from its content; uploading the
    /// same content twice yields the same id.
    pub fn put_document(&self, file: &PositionalTextFile) -> Result<(String, PositionalTextFile)> {
        let mut stored = file.clone();
        stored.doc_id = String::new();
        let id = format!("doc-{:016x}", stable_hash(&serde_json::to_vec(&stored)?));
        stored.doc_id = id.clone();
        if stored.sender_id.is_empty() {
            stored.sender_id = "unknown".into();
        }
        let path = self.doc_path(&id);
        if !path.exists() {
            let _guard = self.writer.lock().expect("store lock");
            write_atomic(&path, &serde_json::to_vec(&stored)?)?;
        }
        Ok((id, stored))
    }

    pub fn document(&self, id: &str) -> Result<Option<PositionalTextFile>> {
        if !valid_id(id) {
            return Ok(None);
        }
        match fs::read(self.doc_path(id)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn append_feedback(&self, record: &FeedbackRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let _guard = self.writer.lock().expect("store lock");
        let mut f = OpenOptions::new().append(true).open(self.root.join(FEEDBACK))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    pub fn feedback(&self) -> Result<Vec<FeedbackRecord>> {
        let f = fs::File::open(self.root.join(FEEDBACK))?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }

    /// Training pairs from the log: the latest record per document wins,
    /// documents in order of their first record.
    pub fn replay(&self) -> Result<Vec<LabeledPair>> {
        let records = self.feedback()?;
        let mut order: Vec<&str> = Vec::new();
        let mut latest: BTreeMap<&str, &FeedbackRecord> = BTreeMap::new();
        for r in &records {
            if latest.insert(&r.doc_id, r).is_none() {
                order.push(&r.doc_id);
            }
        }
        order
            .into_iter()
            .map(|id| {
                let file = self.document(id)?.ok_or_else(|| Error::Config(format!("feedback for unknown document {id}")))?;
                LabeledPair::from_source(file, latest[id].corrected_invoice.clone(), NoiseLog::default())
            })
            .collect()
    }

    pub fn save_model(&self, model: &Model) -> Result<String> {
        let id = model.id();
        let path = self.root.join("models").join(format!("{id}.model"));
        if !path.exists() {
            write_atomic(&path, &model.to_bytes())?;
        }
        Ok(id)
    }

    pub fn activate(&self, id: &str) -> Result<()> {
        if !valid_id(id) || !self.root.join("models").join(format!("{id}.model")).exists() {
            return Err(Error::Config(format!("no stored model {id}")));
        }
        let _guard = self.writer.lock().expect("store lock");
        write_atomic(&self.root.join("models").join(ACTIVE), id.as_bytes())
    }

    pub fn active_model(&self) -> Result<Option<Model>> {
        let id = match fs::read_to_string(self.root.join("models").join(ACTIVE)) {
            Ok(id) => id.trim().to_string(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let bytes = fs::read(self.root.join("models").join(format!("{id}.model")))?;
        Model::from_bytes(&bytes).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ledgerscan::ingest::synth::{generate_corpus, CorpusSpec};
    use ledgerscan::FieldType;

    fn record(doc_id: &str, total: &str) -> FeedbackRecord {
        let mut inv = Invoice::new();
        inv.set(FieldType::Total, total);
        FeedbackRecord {
            doc_id: doc_id.into(),
            corrected_invoice: inv,
            accepted_at: "2016-09-30T00:00:00Z".into(),
            source: FeedbackSource::Api,
        }
    }

    #[test]
    fn documents_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let pairs = generate_corpus(&CorpusSpec { num_templates: 1, docs_per_template: [2, 2], ..CorpusSpec::default() }).unwrap();
        let (a, stored) = store.put_document(&pairs[0].source).unwrap();
        let (again, _) = store.put_document(&pairs[0].source).unwrap();
        let (b, _) = store.put_document(&pairs[1].source).unwrap();
        assert_eq!(a, again);
        assert_ne!(a, b);
        assert_eq!(store.document(&a).unwrap().unwrap(), stored);
        assert!(store.document("../feedback").unwrap().is_none());
        assert!(store.document("doc-0").unwrap().is_none());
    }

    #[test]
    fn replay_keeps_latest_record_in_first_seen_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let pairs = generate_corpus(&CorpusSpec { num_templates: 1, docs_per_template: [2, 2], ..CorpusSpec::default() }).unwrap();
        let (a, _) = store.put_document(&pairs[0].source).unwrap();
        let (b, _) = store.put_document(&pairs[1].source).unwrap();
        for r in [record(&b, "1.00"), record(&a, "2.00"), record(&b, "3.00")] {
            store.append_feedback(&r).unwrap();
        }
        let replayed = store.replay().unwrap();
        assert_eq!(replayed.len(), 2);
        assert_eq!(replayed[0].doc.doc_id(), b);
        assert_eq!(replayed[0].truth.get(FieldType::Total), Some("3.00"));
        assert_eq!(replayed[1].truth.get(FieldType::Total), Some("2.00"));
        // reopening replays the same set
        assert_eq!(Store::open(dir.path()).unwrap().replay().unwrap(), replayed);
        assert_eq!(store.feedback().unwrap().len(), 3);
    }

    #[test]
    fn no_active_model_until_activated() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.active_model().unwrap().is_none());
        assert!(store.activate("baseline-0000").is_err());
    }
}
