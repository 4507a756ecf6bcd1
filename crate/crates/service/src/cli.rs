//! Command-line verbs. Every flag can also be set through an `LS_` variable.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ledgerscan::autolabel::{label_ngrams, to_iob_sequence, write_ngram_jsonl, write_sequence_jsonl};
use ledgerscan::eval::{run_experiment, Experiment, ExperimentConfig, Thresholds};
use ledgerscan::features::lexicon::Lexicons;
use ledgerscan::ingest::corpus::{read_corpus, write_corpus};
use ledgerscan::ingest::hocr::load_hocr;
use ledgerscan::ingest::json::load_document_bytes;
use ledgerscan::ingest::split::{split_pairs_by_document, Ratios};
use ledgerscan::ingest::synth::{generate_corpus_with, CorpusSpec};
use ledgerscan::par::Exec;
use ledgerscan::pipeline::{doc_truth, train, Classifier, Model, TrainOptions};
use ledgerscan::postprocess::to_xml;
use ledgerscan::{Document, Error, Result};
use serde::de::DeserializeOwned;

use crate::api::{router, AppState, ServiceConfig};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(name = "ledgerscan", version, about = "Invoice field extraction from positioned text")]
pub struct Cli {
    /// Run on one thread.
    #[arg(long, global = true, env = "LS_SEQUENTIAL")]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus.
    Generate {
        /// Corpus spec (JSON); defaults apply to missing keys.
        #[arg(long, env = "LS_SPEC")]
        spec: Option<PathBuf>,
        #[arg(long, env = "LS_OUT")]
        out: PathBuf,
    },
    /// Extract the invoice of one document (positional JSON or hOCR) as XML.
    Extract {
        #[arg(long, env = "LS_MODEL")]
        model: PathBuf,
        #[arg(long = "in", env = "LS_IN")]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long, env = "LS_OUT")]
        out: Option<PathBuf>,
    },
    /// Write the automatically extracted training labels of a corpus.
    Autolabel {
        #[arg(long, env = "LS_CORPUS")]
        corpus: PathBuf,
        /// Directory receiving ngrams.jsonl and sequences.jsonl.
        #[arg(long, env = "LS_OUT")]
        out: PathBuf,
    },
    /// Train a classifier on a corpus; a seeded tenth is held out for early stopping.
    Train {
        #[arg(long, env = "LS_CLASSIFIER")]
        classifier: Classifier,
        #[arg(long, env = "LS_CORPUS")]
        corpus: PathBuf,
        #[arg(long, env = "LS_OUT")]
        out: PathBuf,
        /// Training options (JSON); the desk preset when absent.
        #[arg(long, env = "LS_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, env = "LS_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment and write its report; exits 1 when thresholds are unmet.
    Evaluate {
        /// 1 (next invoice), 2 (unseen sender) or ceiling.
        #[arg(long, env = "LS_EXPERIMENT")]
        experiment: Experiment,
        #[arg(long, env = "LS_CLASSIFIER", default_value = "seq")]
        classifier: Classifier,
        #[arg(long, env = "LS_CORPUS")]
        corpus: PathBuf,
        #[arg(long, env = "LS_REPORT")]
        report: PathBuf,
        /// Experiment options (JSON); the desk preset when absent.
        #[arg(long, env = "LS_CONFIG")]
        config: Option<PathBuf>,
        /// Minimum scores (JSON).
        #[arg(long, env = "LS_THRESHOLDS")]
        thresholds: Option<PathBuf>,
        #[arg(long, env = "LS_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "LS_STORE")]
        store: PathBuf,
        /// Installed as the active model at startup.
        #[arg(long, env = "LS_MODEL")]
        model: Option<PathBuf>,
        #[arg(long, env = "LS_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "LS_HOST", default_value = "127.0.0.1")]
        host: String,
        /// Service options (JSON).
        #[arg(long, env = "LS_CONFIG")]
        config: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_slice(&fs::read(p)?)?),
        None => Ok(T::default()),
    }
}

pub fn read_document(path: &Path) -> Result<Document> {
    let bytes = fs::read(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let looks_hocr = matches!(ext, "html" | "htm" | "hocr" | "xhtml") || bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'<');
    if looks_hocr {
        load_hocr(&bytes)
    } else {
        load_document_bytes(&bytes)
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Runs a parsed command. `Ok(false)` means it ran but its check failed.
pub fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Generate { spec, out } => {
            let spec: CorpusSpec = read_json(spec.as_deref())?;
            let pairs = generate_corpus_with(&spec, exec)?;
            write_corpus(&out, &pairs)?;
            eprintln!("wrote {} documents to {}", pairs.len(), out.display());
        }
        Command::Extract { model, input, out } => {
            let model = Model::from_bytes(&fs::read(&model)?)?;
            let doc = read_document(&input)?;
            let e = model.extract(&doc, Lexicons::builtin(), &Default::default())?;
            write_out(out.as_deref(), &to_xml(&e.invoice))?;
        }
        Command::Autolabel { corpus, out } => {
            let pairs = read_corpus(&corpus)?;
            fs::create_dir_all(&out)?;
            let mut ngrams = BufWriter::new(fs::File::create(out.join("ngrams.jsonl"))?);
            let mut seqs = BufWriter::new(fs::File::create(out.join("sequences.jsonl"))?);
            for p in &pairs {
                let labeled = label_ngrams(&p.doc, &p.truth);
                write_ngram_jsonl(&mut ngrams, &p.doc, &labeled, None)?;
                write_sequence_jsonl(&mut seqs, &p.doc, &to_iob_sequence(&p.doc, &labeled))?;
            }
            ngrams.flush()?;
            seqs.flush()?;
            eprintln!("labeled {} documents", pairs.len());
        }
        Command::Train { classifier, corpus, out, config, seed } => {
            let mut opts = match config {
                Some(p) => serde_json::from_slice(&fs::read(p)?)?,
                None => TrainOptions::desk(),
            };
            opts.seq.seed = seed;
            opts.baseline.seed = seed;
            let pairs = read_corpus(&corpus)?;
            let split = split_pairs_by_document(&pairs, Ratios { train: 0.9, validation: 0.1, test: 0.0 }, seed)?;
            let [tr, va, _] = split.select(&pairs);
            let (model, summary) = train(classifier, &doc_truth(&tr), &doc_truth(&va), &opts, Lexicons::builtin(), exec)?;
            fs::write(&out, model.to_bytes())?;
            println!("{}", serde_json::json!({ "modelId": model.id(), "training": summary }));
        }
        Command::Evaluate { experiment, classifier, corpus, report, config, thresholds, seed } => {
            let config = match config {
                Some(p) => serde_json::from_slice(&fs::read(p)?)?,
                None => ExperimentConfig { train: TrainOptions::desk(), ..ExperimentConfig::default() },
            };
            let thresholds: Thresholds = read_json(thresholds.as_deref())?;
            let pairs = read_corpus(&corpus)?;
            let run = run_experiment(&pairs, experiment, classifier, seed, &config, Lexicons::builtin(), exec)?;
            fs::write(&report, run.report.to_json())?;
            print!("{}", run.report.to_table());
            let failures = thresholds.failures(&run.report);
            for f in &failures {
                eprintln!("threshold not met: {f}");
            }
            return Ok(failures.is_empty());
        }
        Command::Serve { store, model, port, host, config } => {
            let config: ServiceConfig = read_json(config.as_deref())?;
            let state = AppState::new(Store::open(store)?, config, exec)?;
            if let Some(m) = model {
                let id = state.install(Model::from_bytes(&fs::read(m)?)?)?;
                eprintln!("active model {id}");
            }
            let app = router(Arc::new(state));
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, app).await
            })
            .map_err(Error::Io)?;
        }
    }
    Ok(true)
}
