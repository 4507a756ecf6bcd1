//! The word-level IOB tagger and its `LSSQ1` model file.

pub mod net;
pub mod tensor;
pub mod train;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use net::{Masks, Params, SeqDims, SeqMode, WordInputs};
pub use train::{build_word_inputs, train_seq, FeatureStats, SeqExample, TrainConfig, TrainReport};

use crate::autolabel::{chunk_single, Chunk, IobSequence};
use crate::error::{Error, Result};
use crate::features::lexicon::Lexicons;
use crate::hashing::{HASH_ALGORITHM, HASH_SEED};
use crate::model::{Document, FieldType, IobTag, TagSet};
use crate::par::{self, Exec};

const MAGIC: &[u8; 5] = b"LSSQ1";

/// A chunk with the mean probability of its words' chosen tags.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqModel {
    pub params: Params,
    pub stats: FeatureStats,
    pub tagset: TagSet,
    pub train_config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    dims: SeqDims,
    hash_algorithm: String,
    hash_seed: u64,
    tag_fields: Vec<FieldType>,
    stats: FeatureStats,
    train_config: TrainConfig,
    /// Name, rows and columns of each tensor after the embedding, in file order.
    tensors: Vec<(String, usize, usize)>,
}

/// Trains a tagger: fits standardization on the training words, then runs [`train_seq`].
/// Final weights are rounded to single precision so the saved file reloads exactly.
pub fn train_seq_model(
    train: &[(&Document, &IobSequence)],
    val: &[(&Document, &IobSequence)],
    dims: &SeqDims,
    config: &TrainConfig,
    lex: &Lexicons,
    exec: Exec,
) -> Result<(SeqModel, TrainReport)> {
    dims.validate()?;
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let tagset = TagSet::default();
    if dims.tags != tagset.len() {
        return Err(Error::DimensionMismatch { expected: tagset.len(), got: dims.tags });
    }
    let raw = par::map(exec, train, |(doc, _)| train::raw_word_features(doc, lex));
    let stats = FeatureStats::fit(raw.iter().map(Vec::as_slice), dims.numeric)?;
    let train_ex = train::make_examples(train, lex, &stats, dims, &tagset, exec);
    let val_ex = train::make_examples(val, lex, &stats, dims, &tagset, exec);
    let init = Params::init(dims, config.seed)?;
    let (mut params, report) = train_seq(init, &train_ex, &val_ex, config, exec)?;
    round_to_f32(&mut params);
    Ok((SeqModel { params, stats, tagset, train_config: config.clone() }, report))
}

fn round_to_f32(params: &mut Params) {
    params.emb.data.iter_mut().for_each(|x| *x = f64::from(*x as f32));
    for t in params.dense_tensors_mut() {
        t.data.iter_mut().for_each(|x| *x = f64::from(*x as f32));
    }
}

impl SeqModel {
    pub fn dims(&self) -> &SeqDims {
        &self.params.dims
    }

    pub fn inputs(&self, doc: &Document, lex: &Lexicons) -> WordInputs {
        build_word_inputs(doc, lex, &self.stats, self.dims().hash_bits)
    }

    /// Per-word tag probabilities, `len × tags`.
    pub fn tag_probs(&self, doc: &Document, lex: &Lexicons) -> Result<Vec<f64>> {
        Ok(self.params.forward(&self.inputs(doc, lex), None)?.probs)
    }

    /// The highest-probability tag per word, with its probability. Ties go to the lower tag index.
    pub fn decide(&self, probs: &[f64]) -> Vec<(IobTag, f64)> {
        probs
            .chunks_exact(self.tagset.len())
            .map(|row| {
                let (k, p) = row.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
                (self.tagset.tag(k).expect("row width is the tag count"), p)
            })
            .collect()
    }

    pub fn predict(&self, doc: &Document, lex: &Lexicons) -> Result<Vec<ScoredChunk>> {
        let decided = self.decide(&self.tag_probs(doc, lex)?);
        let tags: Vec<IobTag> = decided.iter().map(|d| d.0).collect();
        Ok(chunk_single(&tags)
            .into_iter()
            .map(|chunk| {
                let prob = decided[chunk.start..chunk.start + chunk.len].iter().map(|d| d.1).sum::<f64>() / chunk.len as f64;
                ScoredChunk { chunk, prob }
            })
            .collect())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            dims: self.params.dims.clone(),
            hash_algorithm: HASH_ALGORITHM.into(),
            hash_seed: HASH_SEED,
            tag_fields: self.tagset.fields().to_vec(),
            stats: self.stats.clone(),
            train_config: self.train_config.clone(),
            tensors: self.params.dense_tensors().into_iter().map(|(n, t)| (n, t.rows, t.cols)).collect(),
        })?;
        out.write_all(MAGIC)?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        let mut buf = Vec::with_capacity(4 * self.params.param_count());
        let dense = self.params.dense_tensors();
        for x in self.params.emb.data.iter().chain(dense.iter().flat_map(|(_, t)| t.data.iter())) {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not a sequence model (bad magic)".into()));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        if header.hash_algorithm != HASH_ALGORITHM || header.hash_seed != HASH_SEED {
            return Err(Error::ModelFormat(format!("unsupported hash {} seed {:#x}", header.hash_algorithm, header.hash_seed)));
        }
        let tagset = TagSet::new(&header.tag_fields)?;
        if tagset.len() != header.dims.tags
            || header.stats.mean.len() != header.dims.numeric
            || header.stats.sd.len() != header.dims.numeric
        {
            return Err(Error::ModelFormat("tag set or statistics disagree with dimensions".into()));
        }
        // shapes come from the dimensions; the header's list must agree with them
        let mut params = Params::init(&header.dims, 0).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let expected: Vec<(String, usize, usize)> = params.dense_tensors().into_iter().map(|(n, t)| (n, t.rows, t.cols)).collect();
        if expected != header.tensors {
            return Err(Error::ModelFormat("tensor list disagrees with dimensions".into()));
        }
        let mut raw = vec![0u8; 4 * params.param_count()];
        input.read_exact(&mut raw)?;
        let mut floats = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        for x in params.emb.data.iter_mut() {
            *x = floats.next().expect("sized above");
        }
        for t in params.dense_tensors_mut() {
            for x in t.data.iter_mut() {
                *x = floats.next().expect("sized above");
            }
        }
        if params.emb.data.iter().any(|x| !x.is_finite())
            || params.dense_tensors().iter().any(|(_, t)| t.data.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::ModelFormat("non-finite weight".into()));
        }
        Ok(SeqModel { params, stats: header.stats, tagset, train_config: header.train_config })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }
}
