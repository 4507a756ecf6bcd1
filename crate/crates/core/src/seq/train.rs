//! Word inputs, feature standardization, and the Adam training loop with early stopping.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{Grads, Masks, Params, SeqDims, WordInputs};
use crate::autolabel::IobSequence;
use crate::error::{Error, Result};
use crate::features::compute::{FeatureCalculator, DENSE_FEATURE_COUNT};
use crate::features::lexicon::Lexicons;
use crate::hashing::{bucket, mix_seed};
use crate::model::{Document, NGram, TagSet};
use crate::par::{self, Exec};

/// Per-feature mean and standard deviation over the training words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(n: usize) -> Self {
        FeatureStats { mean: vec![0.0; n], sd: vec![1.0; n] }
    }

    /// Fits on row-major feature blocks of width `n`. A constant feature gets sd 1.
    pub fn fit<'a>(blocks: impl IntoIterator<Item = &'a [f64]>, n: usize) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for block in blocks {
            for row in block.chunks_exact(n) {
                count += 1;
                for j in 0..n {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
            }
        }
        if count == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let c = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
        let sd = (0..n)
            .map(|j| {
                let var = (sq[j] / c - mean[j] * mean[j]).max(0.0);
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureStats { mean, sd })
    }

    pub fn apply(&self, raw: &mut [f64]) {
        let n = self.mean.len();
        for row in raw.chunks_exact_mut(n) {
            for j in 0..n {
                row[j] = (row[j] - self.mean[j]) / self.sd[j];
            }
        }
    }
}

/// Unstandardized word features of a document, one row per word.
pub fn raw_word_features(doc: &Document, lex: &Lexicons) -> Vec<f64> {
    let calc = FeatureCalculator::new(doc, lex);
    let mut out = Vec::with_capacity(doc.len() * DENSE_FEATURE_COUNT);
    for i in 0..doc.len() {
        out.extend(calc.compute(&NGram::from_span(doc, i, 1)).dense());
    }
    out
}

pub fn word_hashes(doc: &Document, bits: u32) -> Vec<u32> {
    doc.words().iter().map(|w| bucket(w.text.as_bytes(), bits)).collect()
}

pub fn build_word_inputs(doc: &Document, lex: &Lexicons, stats: &FeatureStats, bits: u32) -> WordInputs {
    let mut numeric = raw_word_features(doc, lex);
    stats.apply(&mut numeric);
    WordInputs { hash: word_hashes(doc, bits), numeric }
}

/// Multi-hot targets, `len × tags`.
pub fn targets(seq: &IobSequence, tagset: &TagSet) -> Vec<f64> {
    let k = tagset.len();
    let mut out = vec![0.0; seq.tags.len() * k];
    for (t, tags) in seq.tags.iter().enumerate() {
        for tag in tags {
            if let Some(j) = tagset.index(*tag) {
                out[t * k + j] = 1.0;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqExample {
    pub inputs: WordInputs,
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub max_train_seq_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 96,
            patience: 5,
            max_epochs: 100,
            max_train_seq_len: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size, patience and max epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

/// Adam with moment estimates for every parameter; embedding rows are
/// updated only when they receive a gradient.
pub struct Adam {
    config: TrainConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    emb_m: BTreeMap<u32, Vec<f64>>,
    emb_v: BTreeMap<u32, Vec<f64>>,
}

impl Adam {
    pub fn new(params: &Params, config: &TrainConfig) -> Self {
        let shapes: Vec<usize> = params.dense_tensors().iter().map(|(_, t)| t.len()).collect();
        Adam {
            config: config.clone(),
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            emb_m: BTreeMap::new(),
            emb_v: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, params: &mut Params, grads: &Grads) {
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (c.beta1, c.beta2);
        let alpha = c.learning_rate * (1.0 - b2.powi(self.step)).sqrt() / (1.0 - b1.powi(self.step));
        let eps = c.epsilon;
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                p[k] -= alpha * m[k] / (v[k].sqrt() + eps);
            }
        };
        let grad_tensors = grads.dense.dense_tensors();
        for (i, p) in params.dense_tensors_mut().into_iter().enumerate() {
            apply(&mut p.data, &grad_tensors[i].1.data, &mut self.m[i], &mut self.v[i]);
        }
        let e = params.dims.embed;
        for (&row, g) in &grads.emb {
            let m = self.emb_m.entry(row).or_insert_with(|| vec![0.0; e]);
            let v = self.emb_v.entry(row).or_insert_with(|| vec![0.0; e]);
            apply(params.emb.row_mut(row as usize), g, m, v);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainReport {
    pub epochs: usize,
    pub best_epoch: usize,
    /// Mean loss per word, one entry per epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Training sequences skipped for length.
    pub excluded: usize,
}

/// Mean summed cross-entropy per word, without dropout.
pub fn mean_loss(params: &Params, examples: &[SeqExample], exec: Exec) -> Result<f64> {
    let per = par::map(exec, examples, |ex| -> Result<(f64, usize)> {
        let cache = params.forward(&ex.inputs, None)?;
        Ok((params.loss(&cache, &ex.targets)?, ex.inputs.len()))
    });
    let (mut total, mut words) = (0.0, 0usize);
    for r in per {
        let (l, n) = r?;
        total += l;
        words += n;
    }
    Ok(total / words.max(1) as f64)
}

/// Gradient of the batch loss averaged per word, and the summed loss.
pub fn batch_gradient(params: &Params, batch: &[(usize, &SeqExample)], epoch: usize, seed: u64, exec: Exec) -> Result<(f64, Grads)> {
    let per = par::map(exec, batch, |(idx, ex)| -> Result<(f64, Grads)> {
        let masks = (params.dims.dropout > 0.0).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64, *idx as u64));
            Masks::sample(&params.dims, &ex.inputs, &mut rng)
        });
        let cache = params.forward(&ex.inputs, masks.as_ref())?;
        params.backward(&ex.inputs, &cache, &ex.targets, masks.as_ref())
    });
    let mut total = Grads::zeros(params);
    let mut loss = 0.0;
    // summed in batch order so the result does not depend on scheduling
    for r in per {
        let (l, g) = r?;
        loss += l;
        total.add(&g);
    }
    let words: usize = batch.iter().map(|(_, ex)| ex.inputs.len()).sum();
    total.scale(1.0 / words.max(1) as f64);
    Ok((loss, total))
}

/// Trains from `init`, keeping the parameters with the lowest validation loss.
/// Stops once `patience` epochs pass without a strict improvement.
pub fn train_seq(
    init: Params,
    train: &[SeqExample],
    val: &[SeqExample],
    config: &TrainConfig,
    exec: Exec,
) -> Result<(Params, TrainReport)> {
    config.validate()?;
    if val.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let usable: Vec<(usize, &SeqExample)> =
        train.iter().enumerate().filter(|(_, ex)| ex.inputs.len() <= config.max_train_seq_len).collect();
    if usable.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let excluded = train.len() - usable.len();
    let mut params = init;
    let mut adam = Adam::new(&params, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut report = TrainReport { epochs: 0, best_epoch: 0, train_loss: Vec::new(), val_loss: Vec::new(), excluded };
    let mut order = usable;
    let train_words: usize = order.iter().map(|(_, ex)| ex.inputs.len()).sum();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = batch_gradient(&params, batch, epoch, config.seed, exec)?;
            epoch_loss += loss;
            adam.update(&mut params, &grads);
        }
        let val_loss = mean_loss(&params, val, exec)?;
        report.epochs = epoch;
        report.train_loss.push(epoch_loss / train_words as f64);
        report.val_loss.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }
    report.best_epoch = best.2;
    Ok((best.1, report))
}

/// Builds standardized examples for a set of labeled documents.
pub fn make_examples(
    docs: &[(&Document, &IobSequence)],
    lex: &Lexicons,
    stats: &FeatureStats,
    dims: &SeqDims,
    tagset: &TagSet,
    exec: Exec,
) -> Vec<SeqExample> {
    par::map(exec, docs, |(doc, seq)| SeqExample {
        inputs: build_word_inputs(doc, lex, stats, dims.hash_bits),
        targets: targets(seq, tagset),
    })
}
