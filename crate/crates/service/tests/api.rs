use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ledgerscan::baseline::BaselineConfig;
use ledgerscan::features::lexicon::Lexicons;
use ledgerscan::ingest::hocr::write_hocr;
use ledgerscan::ingest::synth::{generate_corpus, CorpusSpec, LabeledPair};
use ledgerscan::par::Exec;
use ledgerscan::pipeline::{doc_truth, train, Classifier, TrainOptions};
use ledgerscan::FieldType;
use ledgerscan_service::api::{router, AppState, ServiceConfig};
use ledgerscan_service::store::Store;
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus(templates: usize, per: usize, seed: u64) -> Vec<LabeledPair> {
    generate_corpus(&CorpusSpec { num_templates: templates, docs_per_template: [per, per], seed, ..CorpusSpec::default() }).unwrap()
}

fn quick_config() -> ServiceConfig {
    let mut c = ServiceConfig::default();
    c.train.baseline = BaselineConfig { bits: 16, epochs: 4, ..BaselineConfig::default() };
    c.train.seq.max_epochs = 3;
    c
}

fn app(dir: &std::path::Path, config: ServiceConfig) -> (Arc<AppState>, Router) {
    let state = Arc::new(AppState::new(Store::open(dir).unwrap(), config, Exec::Parallel).unwrap());
    (state.clone(), router(state))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn post_json(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

async fn upload(app: &Router, pair: &LabeledPair) -> String {
    let (status, body) = send(app, post_json("/documents", &serde_json::to_value(&pair.source).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["docId"].as_str().unwrap().to_string()
}

/// Accepts `truth` for the document as-is.
async fn accept(app: &Router, id: &str, pair: &LabeledPair) -> StatusCode {
    let inv: serde_json::Map<String, Value> = pair.truth.iter().map(|(f, v)| (f.name().to_string(), json!(v))).collect();
    send(app, post_json(&format!("/documents/{id}/feedback"), &json!({ "correctedInvoice": inv, "source": "ui" }))).await.0
}

fn install_baseline(state: &AppState, pairs: &[LabeledPair]) {
    let refs: Vec<&LabeledPair> = pairs.iter().collect();
    let opts = TrainOptions { baseline: BaselineConfig { bits: 16, epochs: 4, ..BaselineConfig::default() }, ..TrainOptions::default() };
    let (model, _) = train(Classifier::Baseline, &doc_truth(&refs), &[], &opts, Lexicons::builtin(), Exec::Parallel).unwrap();
    state.install(model).unwrap();
}

#[tokio::test]
async fn upload_then_extract_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app(dir.path(), quick_config());
    let pairs = corpus(3, 4, 11);
    install_baseline(&state, &pairs);
    let id = upload(&app, &pairs[0]).await;
    let (status, ex) = send(&app, get(&format!("/documents/{id}/extraction"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ex["modelId"], json!(state.active_model().unwrap().id()));
    let total = &ex["perField"]["Total"];
    assert_eq!(total["present"], json!(true), "{ex}");
    let indices = total["sourceWordIndices"].as_array().unwrap();
    assert!(!indices.is_empty());
    // the indices point at the words that spell the value
    let (_, doc) = send(&app, get(&format!("/documents/{id}"))).await;
    let words: Vec<&str> = indices.iter().map(|i| doc["words"][i.as_u64().unwrap() as usize]["text"].as_str().unwrap()).collect();
    let parsed = ledgerscan::features::parse::parse_field(FieldType::Total, &words.join(" "));
    assert_eq!(parsed.value(), total["value"].as_str());
    for f in FieldType::TARGETS {
        let v = &ex["perField"][f.name()];
        if v["present"] == json!(false) {
            assert!(v["sourceWordIndices"].as_array().unwrap().is_empty());
            assert_eq!(v["value"], Value::Null);
        }
    }
    assert!(ex["xml"].as_str().unwrap().contains("<PayableAmount>"));
}

#[tokio::test]
async fn absent_field_has_no_indices() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), quick_config());
    let pairs = corpus(1, 1, 3);
    // no model yet: every field is absent
    let id = upload(&app, &pairs[0]).await;
    let (status, ex) = send(&app, get(&format!("/documents/{id}/extraction"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ex["modelId"], Value::Null);
    for f in FieldType::TARGETS {
        assert_eq!(ex["perField"][f.name()]["present"], json!(false));
        assert_eq!(ex["perField"][f.name()]["sourceWordIndices"], json!([]));
    }
}

#[tokio::test]
async fn hocr_upload_extracts_like_json() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app(dir.path(), quick_config());
    let pairs = corpus(2, 3, 5);
    install_baseline(&state, &pairs);
    let json_id = upload(&app, &pairs[1]).await;
    let hocr = write_hocr(&pairs[1].source);
    let req = Request::post("/documents").header(header::CONTENT_TYPE, "text/html").body(Body::from(hocr)).unwrap();
    let (status, body) = send(&app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let hocr_id = body["docId"].as_str().unwrap();
    let (_, a) = send(&app, get(&format!("/documents/{json_id}/extraction"))).await;
    let (_, b) = send(&app, get(&format!("/documents/{hocr_id}/extraction"))).await;
    assert_eq!(a["invoice"], b["invoice"]);
    assert_eq!(a["perField"], b["perField"]);
}

#[tokio::test]
async fn bad_uploads() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config();
    config.max_upload_bytes = 4096;
    let (_, app) = app(dir.path(), config);
    let bad_box = json!({
        "docId": "x", "senderId": "s",
        "pages": [{ "width": 100.0, "height": 100.0, "lines": [{ "words": [{ "text": "Total", "bbox": [10.0, 10.0, 120.0, 20.0] }] }] }]
    });
    let (status, body) = send(&app, post_json("/documents", &bad_box)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["path"], json!("pages[0].lines[0].words[0]"));
    let (status, _) =
        send(&app, Request::post("/documents").header(header::CONTENT_TYPE, "application/json").body(Body::from("{nope")).unwrap()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let big = serde_json::to_string(&corpus(1, 1, 0)[0].source).unwrap();
    assert!(big.len() > 4096);
    let (status, _) =
        send(&app, Request::post("/documents").header(header::CONTENT_TYPE, "application/json").body(Body::from(big)).unwrap()).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn unknown_documents() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), quick_config());
    assert_eq!(send(&app, get("/documents/doc-0123456789abcdef/extraction")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(send(&app, get("/documents/..%2Fmodels/extraction")).await.0, StatusCode::NOT_FOUND);
    let fb = json!({ "correctedInvoice": { "Total": "1.00" } });
    assert_eq!(send(&app, post_json("/documents/doc-0123456789abcdef/feedback", &fb)).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn feedback_is_canonicalized_and_appended() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app(dir.path(), quick_config());
    let pair = &corpus(1, 1, 9)[0];
    let id = upload(&app, pair).await;
    let before = state.store.document(&id).unwrap();
    let fb = json!({ "correctedInvoice": { "Date": "30.09.2016", "Number": "NOT-ON-THE-PAGE-77", "OrderId": null } });
    let (status, _) = send(&app, post_json(&format!("/documents/{id}/feedback"), &fb)).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let log = state.store.feedback().unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].corrected_invoice.get(FieldType::Date), Some("2016-09-30"));
    assert_eq!(log[0].corrected_invoice.get(FieldType::Number), Some("NOT-ON-THE-PAGE-77"));
    assert_eq!(log[0].corrected_invoice.get(FieldType::OrderId), None);
    // the stored document is untouched
    assert_eq!(state.store.document(&id).unwrap(), before);

    let (status, body) =
        send(&app, post_json(&format!("/documents/{id}/feedback"), &json!({ "correctedInvoice": { "Total": "abc", "Currency": "EUR" } })))
            .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["errors"][0]["field"], json!("Total"));
    assert_eq!(body["errors"].as_array().unwrap().len(), 1);
    assert_eq!(state.store.feedback().unwrap().len(), 1);
}

#[tokio::test]
async fn training_needs_enough_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), quick_config());
    let (status, _) = send(&app, post_json("/train", &json!({ "classifier": "baseline" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = send(&app, post_json("/train", &json!({ "classifier": "oracle" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn retraining_on_feedback_activates_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app(dir.path(), quick_config());
    let pairs = corpus(10, 5, 21);
    assert_eq!(pairs.len(), 50);
    let mut ids = Vec::new();
    for p in &pairs {
        let id = upload(&app, p).await;
        assert_eq!(accept(&app, &id, p).await, StatusCode::NO_CONTENT);
        ids.push(id);
    }
    let (status, out) = send(&app, post_json("/train", &json!({ "classifier": "baseline" }))).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["activated"], json!(true));
    assert_eq!(out["previousModelId"], Value::Null);
    assert_eq!(out["report"]["documents"], json!(5));
    assert!(out["report"]["micro"]["f1"].as_f64().unwrap() > 0.5, "{}", out["report"]);
    let (_, info) = send(&app, get("/model")).await;
    assert_eq!(info["modelId"], out["modelId"]);
    let (_, ex) = send(&app, get(&format!("/documents/{}/extraction", ids[0]))).await;
    assert_eq!(ex["modelId"], out["modelId"]);

    // retraining on the same store gives the same model, which does not regress
    let (_, again) = send(&app, post_json("/train", &json!({ "classifier": "baseline" }))).await;
    assert_eq!(again["modelId"], out["modelId"]);
    assert_eq!(again["activated"], json!(true));
    assert_eq!(again["previousF1"], out["report"]["micro"]["f1"]);

    // a fresh process over the same store starts with the activated model
    let (state2, _) = self::app(dir.path(), quick_config());
    assert_eq!(state2.active_model().unwrap().id(), state.active_model().unwrap().id());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_training_request_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config();
    config.train.seq.max_epochs = 40;
    config.train.seq.patience = 40;
    let (state, app) = app(dir.path(), config);
    for p in &corpus(4, 3, 8) {
        let id = upload(&app, p).await;
        accept(&app, &id, p).await;
    }
    let first = tokio::spawn({
        let app = app.clone();
        async move { send(&app, post_json("/train", &json!({ "classifier": "seq" }))).await }
    });
    while !state.is_training() {
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    }
    let (status, _) = send(&app, post_json("/train", &json!({ "classifier": "baseline" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    // readers are served while the job runs
    let (_, info) = send(&app, get("/model")).await;
    assert_eq!(info["training"], json!(true));
    let (status, out) = first.await.unwrap();
    assert_eq!(status, StatusCode::OK, "{out}");
    assert!(!state.is_training());
}
