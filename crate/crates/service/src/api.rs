//! HTTP/JSON API: document upload, extraction with provenance, feedback
//! capture and retraining.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ledgerscan::eval::{score_pair, Counts, Report, SplitDescriptor, SplitMode};
use ledgerscan::features::lexicon::Lexicons;
use ledgerscan::features::parse::parse_field;
use ledgerscan::ingest::hocr::parse_hocr;
use ledgerscan::ingest::json::PositionalTextFile;
use ledgerscan::ingest::split::{split_pairs_by_document, Ratios};
use ledgerscan::ingest::synth::LabeledPair;
use ledgerscan::par::Exec;
use ledgerscan::pipeline::{doc_truth, train, Classifier, Model, TrainOptions};
use ledgerscan::postprocess::{to_xml, Extraction, FieldSource, PostConfig};
use ledgerscan::{Document, Error, FieldType, Invoice};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{FeedbackRecord, FeedbackSource, Store};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ServiceConfig {
    pub max_upload_bytes: usize,
    /// Fewest feedback pairs a retraining run accepts.
    pub min_pairs: usize,
    /// Share of the replayed pairs held out to compare models.
    pub holdout: f64,
    pub seed: u64,
    pub post: PostConfig,
    pub train: TrainOptions,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_upload_bytes: 2 << 20,
            min_pairs: 10,
            holdout: 0.1,
            seed: 0,
            post: PostConfig::default(),
            train: TrainOptions::desk(),
        }
    }
}

pub struct AppState {
    pub store: Store,
    pub config: ServiceConfig,
    pub exec: Exec,
    active: RwLock<Option<Arc<Model>>>,
    // extraction per document, tagged with the model that produced it
    cache: Mutex<HashMap<String, (Option<String>, Arc<Extraction>)>>,
    training: Arc<tokio::sync::Mutex<()>>,
}

impl AppState {
    /// Opens the store and loads its active model, if any.
    pub fn new(store: Store, config: ServiceConfig, exec: Exec) -> ledgerscan::Result<Self> {
        let active = store.active_model()?.map(Arc::new);
        Ok(AppState {
            store,
            config,
            exec,
            active: RwLock::new(active),
            cache: Mutex::new(HashMap::new()),
            training: Arc::new(tokio::sync::Mutex::new(())),
        })
    }

    pub fn active_model(&self) -> Option<Arc<Model>> {
        self.active.read().expect("model lock").clone()
    }

    /// Stores and activates `model`; readers see the old or the new model, never a mixture.
    pub fn install(&self, model: Model) -> ledgerscan::Result<String> {
        let id = self.store.save_model(&model)?;
        self.store.activate(&id)?;
        *self.active.write().expect("model lock") = Some(Arc::new(model));
        Ok(id)
    }

    pub fn is_training(&self) -> bool {
        self.training.try_lock().is_err()
    }

    fn extraction(&self, id: &str, doc: &Document) -> ledgerscan::Result<(Option<String>, Arc<Extraction>)> {
        let model = self.active_model();
        let model_id = model.as_ref().map(|m| m.id());
        if let Some((mid, e)) = self.cache.lock().expect("cache lock").get(id) {
            if *mid == model_id {
                return Ok((model_id, e.clone()));
            }
        }
        let e = Arc::new(match &model {
            Some(m) => m.extract(doc, Lexicons::builtin(), &self.config.post)?,
            None => ledgerscan::postprocess::post_process(&[], &self.config.post),
        });
        self.cache.lock().expect("cache lock").insert(id.to_string(), (model_id.clone(), e.clone()));
        Ok((model_id, e))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/documents", post(upload))
        .route("/documents/{id}", get(document))
        .route("/documents/{id}/extraction", get(extraction))
        .route("/documents/{id}/feedback", post(feedback))
        .route("/train", post(retrain))
        .route("/model", get(model_info))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

fn error(status: StatusCode, body: serde_json::Value) -> Response {
    (status, Json(body)).into_response()
}

fn internal(e: Error) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() }))
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, json!({ "error": format!("no document {id}") }))
}

/// Location of an input error inside the uploaded file, when the error has one.
fn error_path(e: &Error) -> Option<&str> {
    match e {
        Error::InvalidBox { path, .. } | Error::InvalidWord { path, .. } | Error::Hocr { path, .. } => Some(path),
        _ => None,
    }
}

fn is_hocr(headers: &HeaderMap, body: &[u8]) -> bool {
    let ct = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
    if ct.contains("json") {
        return false;
    }
    ct.contains("html") || ct.contains("xml") || body.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'<')
}

async fn upload(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let parsed =
        if is_hocr(&headers, &body) { parse_hocr(&body) } else { serde_json::from_slice::<PositionalTextFile>(&body).map_err(Error::from) };
    let doc = parsed.and_then(|f| f.to_document().map(|d| (f, d)));
    let (file, _) = match doc {
        Ok(x) => x,
        Err(e) => return error(StatusCode::BAD_REQUEST, json!({ "error": e.to_string(), "path": error_path(&e) })),
    };
    let (id, stored) = match state.store.put_document(&file) {
        Ok(x) => x,
        Err(e) => return internal(e),
    };
    let doc = match stored.to_document() {
        Ok(d) => d,
        Err(e) => return internal(e),
    };
    match state.extraction(&id, &doc) {
        Ok((model_id, _)) => (StatusCode::CREATED, Json(json!({ "docId": id, "modelId": model_id }))).into_response(),
        Err(e) => internal(e),
    }
}

fn load(state: &AppState, id: &str) -> Result<(PositionalTextFile, Document), Response> {
    match state.store.document(id) {
        Ok(Some(f)) => f.to_document().map(|d| (f, d)).map_err(internal),
        Ok(None) => Err(not_found(id)),
        Err(e) => Err(internal(e)),
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct WordView<'a> {
    index: usize,
    text: &'a str,
    page: usize,
    line: usize,
    /// Left, top, right, bottom in the page's original units.
    bbox: [f64; 4],
}

/// The document as words in reading order; extraction word indices refer to this list.
async fn document(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let (file, doc) = match load(&state, &id) {
        Ok(x) => x,
        Err(r) => return r,
    };
    let words: Vec<WordView> = doc
        .words()
        .iter()
        .enumerate()
        .map(|(index, w)| WordView {
            index,
            text: &w.text,
            page: w.page,
            line: w.line,
            bbox: [w.left * w.page_width, w.top * w.page_height, w.right * w.page_width, w.bottom * w.page_height],
        })
        .collect();
    let pages: Vec<_> = file.pages.iter().map(|p| json!({ "width": p.width, "height": p.height })).collect();
    Json(json!({ "docId": id, "senderId": file.sender_id, "pages": pages, "words": words })).into_response()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FieldView {
    present: bool,
    value: Option<String>,
    source_word_indices: Vec<usize>,
    probability: Option<f64>,
    /// Derived from the other totals rather than read off the page.
    computed: bool,
}

fn field_view(e: &Extraction, f: FieldType) -> FieldView {
    let value = e.invoice.get(f).map(str::to_string);
    match e.sources.get(&f) {
        Some(FieldSource::Ngram { start, len, prob, .. }) => FieldView {
            present: value.is_some(),
            value,
            source_word_indices: (*start..start + len).collect(),
            probability: Some(*prob),
            computed: false,
        },
        Some(FieldSource::Computed) => {
            FieldView { present: value.is_some(), value, source_word_indices: Vec::new(), probability: None, computed: true }
        }
        None => FieldView { present: value.is_some(), value, source_word_indices: Vec::new(), probability: None, computed: false },
    }
}

async fn extraction(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let (_, doc) = match load(&state, &id) {
        Ok(x) => x,
        Err(r) => return r,
    };
    let (model_id, e) = match state.extraction(&id, &doc) {
        Ok(x) => x,
        Err(e) => return internal(e),
    };
    let per_field: BTreeMap<&str, FieldView> = FieldType::TARGETS.iter().map(|f| (f.name(), field_view(&e, *f))).collect();
    Json(json!({
        "docId": id,
        "modelId": model_id,
        "invoice": e.invoice,
        "perField": per_field,
        "totalsConsistent": e.totals_consistent,
        "xml": to_xml(&e.invoice),
    }))
    .into_response()
}

/// A corrected value as sent by a client: a string, null for absent, or the
/// `{value, present}` form used in responses.
#[derive(Deserialize)]
#[serde(untagged)]
pub enum FieldInput {
    Text(Option<String>),
    Entry { value: Option<String>, present: bool },
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeedbackBody {
    pub corrected_invoice: BTreeMap<String, FieldInput>,
    #[serde(default = "api_source")]
    pub source: FeedbackSource,
}

fn api_source() -> FeedbackSource {
    FeedbackSource::Api
}

#[derive(Debug, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub value: String,
    pub reason: String,
}

/// Canonical invoice from free-form corrections; every failing field is reported.
pub fn canonicalize(raw: &BTreeMap<String, FieldInput>) -> Result<Invoice, Vec<FieldError>> {
    let mut inv = Invoice::new();
    let mut errors = Vec::new();
    for (name, input) in raw {
        let value = match input {
            FieldInput::Text(v) => v.clone(),
            FieldInput::Entry { value, present } => value.clone().filter(|_| *present),
        };
        let field = match name.parse::<FieldType>() {
            Ok(f) if f != FieldType::Undefined => f,
            _ => {
                errors.push(FieldError { field: name.clone(), value: value.unwrap_or_default(), reason: "unknown field".into() });
                continue;
            }
        };
        let Some(value) = value.filter(|v| !v.trim().is_empty()) else { continue };
        match parse_field(field, &value).value() {
            Some(c) => inv.set(field, c),
            None => errors.push(FieldError { field: name.clone(), value, reason: format!("not a valid {} value", field.name()) }),
        }
    }
    if errors.is_empty() {
        Ok(inv)
    } else {
        Err(errors)
    }
}

async fn feedback(State(state): State<Arc<AppState>>, Path(id): Path<String>, Json(body): Json<FeedbackBody>) -> Response {
    match state.store.document(&id) {
        Ok(Some(_)) => {}
        Ok(None) => return not_found(&id),
        Err(e) => return internal(e),
    }
    let invoice = match canonicalize(&body.corrected_invoice) {
        Ok(inv) => inv,
        Err(errors) => return error(StatusCode::UNPROCESSABLE_ENTITY, json!({ "errors": errors })),
    };
    let record = FeedbackRecord {
        doc_id: id,
        corrected_invoice: invoice,
        accepted_at: humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string(),
        source: body.source,
    };
    match state.store.append_feedback(&record) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => internal(e),
    }
}

#[derive(Deserialize)]
pub struct TrainBody {
    pub classifier: Classifier,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainOutcome {
    pub model_id: String,
    pub activated: bool,
    pub previous_model_id: Option<String>,
    pub previous_f1: Option<f64>,
    pub report: Report,
}

fn holdout_report(model: &Model, held: &[&LabeledPair], split: SplitDescriptor, post: &PostConfig) -> ledgerscan::Result<Report> {
    let mut outcomes: Vec<[Counts; 8]> = Vec::with_capacity(held.len());
    for p in held {
        outcomes.push(score_pair(&model.extract(&p.doc, Lexicons::builtin(), post)?.invoice, &p.truth));
    }
    let (fields, micro) = Report::from_outcomes(&outcomes);
    Ok(Report {
        experiment: "retrain".into(),
        classifier: model.classifier(),
        split,
        model_id: model.id(),
        documents: held.len(),
        fields,
        micro,
        attribution: None,
        training: None,
    })
}

/// Replays the store, trains, and activates the new model unless it scores
/// below the active one on the held-out slice.
pub fn run_training(state: &AppState, classifier: Classifier, pairs: &[LabeledPair]) -> ledgerscan::Result<TrainOutcome> {
    let cfg = &state.config;
    let ratios = Ratios { train: 1.0 - cfg.holdout, validation: cfg.holdout, test: 0.0 };
    let split = split_pairs_by_document(pairs, ratios, cfg.seed)?;
    let [tr, held, _] = split.select(pairs);
    let mut opts = cfg.train.clone();
    opts.seq.seed = cfg.seed;
    opts.baseline.seed = cfg.seed;
    let (model, summary) = train(classifier, &doc_truth(&tr), &doc_truth(&held), &opts, Lexicons::builtin(), state.exec)?;
    let descriptor = SplitDescriptor { mode: SplitMode::ByDocument, seed: cfg.seed, train: tr.len(), validation: held.len(), test: 0 };
    let mut report = holdout_report(&model, &held, descriptor.clone(), &cfg.post)?;
    report.training = Some(summary);
    let previous = state.active_model();
    let previous_f1 = match &previous {
        Some(old) => Some(holdout_report(old, &held, descriptor, &cfg.post)?.micro.f1),
        None => None,
    };
    let activated = previous_f1.is_none_or(|old| report.micro.f1 >= old);
    let model_id = if activated { state.install(model)? } else { state.store.save_model(&model)? };
    Ok(TrainOutcome { model_id, activated, previous_model_id: previous.map(|m| m.id()), previous_f1, report })
}

async fn retrain(State(state): State<Arc<AppState>>, Json(body): Json<TrainBody>) -> Response {
    if body.classifier == Classifier::Oracle {
        return error(StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": "the oracle cannot be trained" }));
    }
    let Ok(guard) = state.training.clone().try_lock_owned() else {
        return error(StatusCode::CONFLICT, json!({ "error": "a training job is already running" }));
    };
    let pairs = match state.store.replay() {
        Ok(p) => p,
        Err(e) => return internal(e),
    };
    if pairs.len() < state.config.min_pairs {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({ "error": format!("the store holds {} feedback pairs, at least {} are needed", pairs.len(), state.config.min_pairs) }),
        );
    }
    let worker = state.clone();
    let job = tokio::task::spawn_blocking(move || {
        let _guard = guard;
        run_training(&worker, body.classifier, &pairs)
    });
    match job.await {
        Ok(Ok(outcome)) => Json(outcome).into_response(),
        Ok(Err(e)) => internal(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() })),
    }
}

async fn model_info(State(state): State<Arc<AppState>>) -> Response {
    let m = state.active_model();
    Json(json!({ "modelId": m.as_ref().map(|m| m.id()), "classifier": m.map(|m| m.classifier()), "training": state.is_training() }))
        .into_response()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, Option<&str>)]) -> BTreeMap<String, FieldInput> {
        pairs.iter().map(|(k, v)| (k.to_string(), FieldInput::Text(v.map(str::to_string)))).collect()
    }

    #[test]
    fn corrections_are_canonicalized() {
        let inv = canonicalize(&raw(&[
            ("Date", Some("30.09.2016")),
            ("Total", Some("1.234,50")),
            ("OrderId", None),
            ("Number", Some(" INV 7 ")),
        ]))
        .unwrap();
        assert_eq!(inv.get(FieldType::Date), Some("2016-09-30"));
        assert_eq!(inv.get(FieldType::Total), Some("1234.50"));
        assert_eq!(inv.get(FieldType::OrderId), None);
        assert_eq!(inv.get(FieldType::Number), Some("INV 7"));
    }

    #[test]
    fn every_bad_field_is_reported() {
        let errors =
            canonicalize(&raw(&[("Total", Some("abc")), ("Date", Some("31.02.2016")), ("Colour", Some("red")), ("Currency", Some("EUR"))]))
                .unwrap_err();
        let fields: Vec<&str> = errors.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["Colour", "Date", "Total"]);
    }

    #[test]
    fn entry_form_and_blank_values() {
        let mut m = BTreeMap::new();
        m.insert("Currency".to_string(), FieldInput::Entry { value: Some("EUR".into()), present: true });
        m.insert("Total".to_string(), FieldInput::Entry { value: Some("9.00".into()), present: false });
        m.insert("TaxPercent".to_string(), FieldInput::Text(Some("  ".into())));
        let inv = canonicalize(&m).unwrap();
        assert_eq!(inv.get(FieldType::Currency), Some("EUR"));
        assert_eq!(inv.get(FieldType::Total), None);
        assert_eq!(inv.get(FieldType::TaxPercent), None);
    }
}
