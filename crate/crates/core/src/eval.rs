//! Exact-match scoring, experiment runs and reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::lexicon::Lexicons;
use crate::ingest::split::{split_pairs_by_document, split_pairs_by_sender, Ratios};
use crate::ingest::synth::LabeledPair;
use crate::model::{FieldType, Invoice};
use crate::par::{self, Exec};
use crate::pipeline::{doc_truth, extract_oracle, train, Classifier, Model, TrainOptions, TrainSummary};
use crate::postprocess::{Extraction, PostConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Outcome for one field of one document. A wrong value counts as both a
/// false positive and a false negative; both absent counts nothing.
pub fn score_field(produced: Option<&str>, truth: Option<&str>) -> Counts {
    match (produced, truth) {
        (Some(p), Some(t)) if p == t => Counts { tp: 1, fp: 0, fn_: 0 },
        (Some(_), Some(_)) => Counts { tp: 0, fp: 1, fn_: 1 },
        (Some(_), None) => Counts { tp: 0, fp: 1, fn_: 0 },
        (None, Some(_)) => Counts { tp: 0, fp: 0, fn_: 1 },
        (None, None) => Counts::default(),
    }
}

/// Per-field outcomes in [`FieldType::TARGETS`] order.
pub fn score_pair(produced: &Invoice, truth: &Invoice) -> [Counts; 8] {
    FieldType::TARGETS.map(|f| score_field(produced.get(f), truth.get(f)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldScore {
    /// `None` for the micro average.
    pub field: Option<FieldType>,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl FieldScore {
    pub fn new(field: Option<FieldType>, counts: Counts) -> Self {
        FieldScore { field, counts, precision: counts.precision(), recall: counts.recall(), f1: counts.f1() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SplitMode {
    ByDocument,
    BySender,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Next invoice from a known sender.
    #[serde(rename = "1")]
    NextInvoice,
    /// First invoice from an unseen sender.
    #[serde(rename = "2")]
    UnseenTemplate,
    Ceiling,
}

impl Experiment {
    pub fn split(self) -> SplitMode {
        match self {
            Experiment::NextInvoice | Experiment::Ceiling => SplitMode::ByDocument,
            Experiment::UnseenTemplate => SplitMode::BySender,
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Experiment::NextInvoice),
            "2" => Ok(Experiment::UnseenTemplate),
            "ceiling" => Ok(Experiment::Ceiling),
            other => Err(Error::Config(format!("unknown experiment {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitDescriptor {
    pub mode: SplitMode,
    pub seed: u64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// How the oracle's errors line up with the generator's noise log.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Attribution {
    /// Wrong or missing (document, field) outcomes.
    pub losses: u64,
    /// Losses on fields the noise log marks as touched.
    pub noise: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub experiment: String,
    pub classifier: Classifier,
    pub split: SplitDescriptor,
    pub model_id: String,
    pub documents: usize,
    pub fields: Vec<FieldScore>,
    pub micro: FieldScore,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attribution: Option<Attribution>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub training: Option<TrainSummary>,
}

impl Report {
    /// Aggregates per-document outcomes; the micro average pools the counts.
    pub fn from_outcomes(outcomes: &[[Counts; 8]]) -> (Vec<FieldScore>, FieldScore) {
        let mut per = [Counts::default(); 8];
        for o in outcomes {
            for (acc, c) in per.iter_mut().zip(o) {
                acc.add(*c);
            }
        }
        let mut pooled = Counts::default();
        per.iter().for_each(|c| pooled.add(*c));
        let fields = FieldType::TARGETS.iter().zip(per).map(|(f, c)| FieldScore::new(Some(*f), c)).collect();
        (fields, FieldScore::new(None, pooled))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, one row per field and a final micro average row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "experiment {} | classifier {} | split {:?} seed {} ({}/{}/{}) | model {}",
            self.experiment,
            self.classifier,
            self.split.mode,
            self.split.seed,
            self.split.train,
            self.split.validation,
            self.split.test,
            self.model_id
        );
        let _ = writeln!(out, "{:<12} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}", "Field", "tp", "fp", "fn", "Precision", "Recall", "F1");
        for s in self.fields.iter().chain(std::iter::once(&self.micro)) {
            let name = s.field.map_or_else(|| "Micro avg.".to_string(), |f| f.to_string());
            let _ = writeln!(
                out,
                "{:<12} {:>6} {:>6} {:>6} {:>9.3} {:>9.3} {:>9.3}",
                name, s.counts.tp, s.counts.fp, s.counts.fn_, s.precision, s.recall, s.f1
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExperimentConfig {
    pub ratios: Ratios,
    pub train: TrainOptions,
    pub post: PostConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { ratios: Ratios::default(), train: TrainOptions::default(), post: PostConfig::default() }
    }
}

pub struct ExperimentRun {
    pub report: Report,
    /// `None` for the oracle.
    pub model: Option<Model>,
    /// Test-set extractions, in test order.
    pub extractions: Vec<Extraction>,
}

/// Splits, trains on the training part (validation drives early stopping),
/// and scores the test part end to end.
pub fn run_experiment(
    corpus: &[LabeledPair],
    experiment: Experiment,
    classifier: Classifier,
    seed: u64,
    config: &ExperimentConfig,
    lex: &Lexicons,
    exec: Exec,
) -> Result<ExperimentRun> {
    let mode = experiment.split();
    let split = match mode {
        SplitMode::ByDocument => split_pairs_by_document(corpus, config.ratios, seed)?,
        SplitMode::BySender => split_pairs_by_sender(corpus, config.ratios, seed)?,
    };
    let [tr, va, te] = split.select(corpus);
    let (model, training) = match classifier {
        Classifier::Oracle => (None, None),
        c => {
            let mut opts = config.train.clone();
            opts.seq.seed = seed;
            opts.baseline.seed = seed;
            let (m, s) = train(c, &doc_truth(&tr), &doc_truth(&va), &opts, lex, exec)?;
            (Some(m), Some(s))
        }
    };
    let extractions: Vec<Extraction> = match &model {
        None => par::map(exec, &te, |p| Ok(extract_oracle(&p.doc, &p.truth, &config.post))),
        Some(m) => par::map(exec, &te, |p| m.extract(&p.doc, lex, &config.post)),
    }
    .into_iter()
    .collect::<Result<_>>()?;
    let outcomes: Vec<[Counts; 8]> = te.iter().zip(&extractions).map(|(p, e)| score_pair(&e.invoice, &p.truth)).collect();
    let (fields, micro) = Report::from_outcomes(&outcomes);
    let attribution = (classifier == Classifier::Oracle).then(|| {
        let mut a = Attribution::default();
        for (p, o) in te.iter().zip(&outcomes) {
            for (f, c) in FieldType::TARGETS.iter().zip(o) {
                if c.tp == 0 && (c.fp + c.fn_) > 0 {
                    a.losses += 1;
                    if p.noise.touches(*f) {
                        a.noise += 1;
                    }
                }
            }
        }
        a
    });
    let report = Report {
        experiment: match experiment {
            Experiment::NextInvoice => "1".into(),
            Experiment::UnseenTemplate => "2".into(),
            Experiment::Ceiling => "ceiling".into(),
        },
        classifier,
        split: SplitDescriptor { mode, seed, train: tr.len(), validation: va.len(), test: te.len() },
        model_id: model.as_ref().map_or_else(|| "oracle".to_string(), Model::id),
        documents: te.len(),
        fields,
        micro,
        attribution,
        training,
    };
    Ok(ExperimentRun { report, model, extractions })
}

/// Minimum scores a report must reach; unset fields are not checked.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Thresholds {
    pub micro_f1: Option<f64>,
    pub micro_precision: Option<f64>,
    pub micro_recall: Option<f64>,
}

impl Thresholds {
    /// Descriptions of the unmet thresholds.
    pub fn failures(&self, report: &Report) -> Vec<String> {
        let m = &report.micro;
        [
            ("micro F1", self.micro_f1, m.f1),
            ("micro precision", self.micro_precision, m.precision),
            ("micro recall", self.micro_recall, m.recall),
        ]
        .into_iter()
        .filter_map(|(name, min, got)| min.filter(|min| got < *min).map(|min| format!("{name} {got:.4} below {min:.4}")))
        .collect()
    }
}
