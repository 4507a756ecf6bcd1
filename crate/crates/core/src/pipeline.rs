//! End-to-end extraction: a trained classifier scores a document, the post
//! processor turns the scores into an invoice.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autolabel::{label_ngrams, to_iob_sequence, IobSequence, MAX_NGRAM};
use crate::baseline::{hash_document, train_baseline, BaselineConfig, Example, LinearModel, CLASSES};
use crate::error::{Error, Result};
use crate::features::lexicon::Lexicons;
use crate::features::ngram::make_ngrams;
use crate::hashing::stable_hash;
use crate::ingest::synth::LabeledPair;
use crate::model::{Document, FieldType, Invoice, NGram};
use crate::par::{self, Exec};
use crate::postprocess::{oracle_classify, post_process, Extraction, PostConfig, Scored};
use crate::seq::{train_seq_model, SeqDims, SeqModel, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Baseline,
    Seq,
    /// The sequence model with its recurrent layer replaced by a dense one.
    Ablation,
    /// True labels in place of a classifier.
    Oracle,
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Baseline => "baseline",
            Classifier::Seq => "seq",
            Classifier::Ablation => "ablation",
            Classifier::Oracle => "oracle",
        })
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Classifier::Baseline),
            "seq" => Ok(Classifier::Seq),
            "ablation" => Ok(Classifier::Ablation),
            "oracle" => Ok(Classifier::Oracle),
            other => Err(Error::Config(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainOptions {
    pub baseline: BaselineConfig,
    pub seq_dims: SeqDims,
    pub seq: TrainConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { baseline: BaselineConfig::default(), seq_dims: SeqDims::desk(), seq: TrainConfig::default() }
    }
}

impl TrainOptions {
    /// Settings for corpora of hundreds rather than hundreds of thousands of
    /// documents: smaller minibatches and a larger step keep the number of
    /// updates per epoch useful.
    pub fn desk() -> Self {
        let mut o = TrainOptions::default();
        o.seq.batch_size = 8;
        o.seq.learning_rate = 0.003;
        o
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Baseline(LinearModel),
    Seq(SeqModel),
}

impl Model {
    pub fn classifier(&self) -> Classifier {
        match self {
            Model::Baseline(_) => Classifier::Baseline,
            Model::Seq(m) if m.dims().mode == crate::seq::SeqMode::Feedforward => Classifier::Ablation,
            Model::Seq(_) => Classifier::Seq,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Model::Baseline(m) => m.to_bytes(),
            Model::Seq(m) => m.to_bytes(),
        }
    }

    /// Reads either model file, told apart by its magic.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.get(..5) {
            Some(b"LSBL1") => Ok(Model::Baseline(LinearModel::from_bytes(bytes)?)),
            Some(b"LSSQ1") => Ok(Model::Seq(SeqModel::from_bytes(bytes)?)),
            _ => Err(Error::ModelFormat("unrecognized model file".into())),
        }
    }

    /// Short content hash identifying the model.
    pub fn id(&self) -> String {
        format!("{}-{:016x}", self.classifier(), stable_hash(&self.to_bytes()))
    }

    pub fn score(&self, doc: &Document, lex: &Lexicons) -> Result<Vec<Scored>> {
        match self {
            Model::Baseline(m) => {
                let ngrams = make_ngrams(doc, MAX_NGRAM);
                let xs = hash_document(doc, &ngrams, lex, m.bits())?;
                let mut out = Vec::new();
                for (g, x) in ngrams.iter().zip(&xs) {
                    let p = m.predict(x)?;
                    for (k, field) in CLASSES.iter().enumerate() {
                        if *field != FieldType::Undefined {
                            out.push(Scored { ngram: g.clone(), field: *field, prob: p[k] });
                        }
                    }
                }
                Ok(out)
            }
            Model::Seq(m) => Ok(m
                .predict(doc, lex)?
                .into_iter()
                .map(|c| Scored { ngram: NGram::from_span(doc, c.chunk.start, c.chunk.len), field: c.chunk.field, prob: c.prob })
                .collect()),
        }
    }

    pub fn extract(&self, doc: &Document, lex: &Lexicons, post: &PostConfig) -> Result<Extraction> {
        Ok(post_process(&self.score(doc, lex)?, post))
    }
}

/// Extraction with true labels standing in for the classifier.
pub fn extract_oracle(doc: &Document, truth: &Invoice, post: &PostConfig) -> Extraction {
    post_process(&oracle_classify(doc, truth), post)
}

/// Baseline training examples of one document: every N-gram up to the
/// classifier's length, with its autolabel classes.
pub fn baseline_examples(doc: &Document, truth: &Invoice, lex: &Lexicons, bits: u32) -> Result<Vec<Example>> {
    let labeled: Vec<_> = label_ngrams(doc, truth).into_iter().filter(|l| l.ngram.len <= MAX_NGRAM).collect();
    let ngrams: Vec<NGram> = labeled.iter().map(|l| l.ngram.clone()).collect();
    let xs = hash_document(doc, &ngrams, lex, bits)?;
    Ok(xs.into_iter().zip(&labeled).map(|(x, l)| Example::new(x, &l.labels)).collect())
}

/// (document, truth) views of labeled pairs, as the training functions take them.
pub fn doc_truth<'a>(ps: &[&'a LabeledPair]) -> Vec<(&'a Document, &'a Invoice)> {
    ps.iter().map(|p| (&p.doc, &p.truth)).collect()
}

pub fn iob_for(doc: &Document, truth: &Invoice) -> IobSequence {
    to_iob_sequence(doc, &label_ngrams(doc, truth))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainSummary {
    pub examples: usize,
    /// Present for the sequence models.
    pub seq: Option<TrainReport>,
}

/// Trains a classifier on (document, truth) pairs. The baseline ignores `val`.
pub fn train(
    classifier: Classifier,
    train: &[(&Document, &Invoice)],
    val: &[(&Document, &Invoice)],
    opts: &TrainOptions,
    lex: &Lexicons,
    exec: Exec,
) -> Result<(Model, TrainSummary)> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    match classifier {
        Classifier::Baseline => {
            opts.baseline.validate()?;
            let per_doc = par::map(exec, train, |(d, t)| baseline_examples(d, t, lex, opts.baseline.bits));
            let mut examples = Vec::new();
            for e in per_doc {
                examples.extend(e?);
            }
            let model = train_baseline(&examples, &opts.baseline)?;
            Ok((Model::Baseline(model), TrainSummary { examples: examples.len(), seq: None }))
        }
        Classifier::Seq | Classifier::Ablation => {
            let dims = if classifier == Classifier::Ablation { opts.seq_dims.ablation() } else { opts.seq_dims.clone() };
            let seqs = |pairs: &[(&Document, &Invoice)]| par::map(exec, pairs, |(d, t)| iob_for(d, t));
            let (train_seqs, val_seqs) = (seqs(train), seqs(val));
            let train_in: Vec<(&Document, &IobSequence)> = train.iter().map(|p| p.0).zip(&train_seqs).collect();
            let val_in: Vec<(&Document, &IobSequence)> = val.iter().map(|p| p.0).zip(&val_seqs).collect();
            let (model, report) = train_seq_model(&train_in, &val_in, &dims, &opts.seq, lex, exec)?;
            Ok((Model::Seq(model), TrainSummary { examples: train.len(), seq: Some(report) }))
        }
        Classifier::Oracle => Err(Error::Config("the oracle is not trained".into())),
    }
}
