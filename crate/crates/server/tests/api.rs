use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::Utc;
use http_body_util::BodyExt;
use medico_core::demo::demo_now;
use medico_server::api;
use medico_server::app::{self, App};
use medico_server::config::Config;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(dir: &Path) -> Config {
    Config {
        data_dir: dir.to_path_buf(),
        demo_seed: Some(42),
        reference_time: Some(demo_now()),
        ..Config::default()
    }
}

fn router(dir: &Path) -> Router {
    let config = config(dir);
    let repo = app::open_repository(&config).unwrap();
    api::router(Arc::new(App::new(repo, config)))
}

async fn call(router: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = router.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn turn(router: &Router, session: Option<&str>, text: &str, pointing: Value) -> Value {
    let mut body = json!({ "text": text, "pointing": pointing });
    if let Some(id) = session {
        body["sessionId"] = json!(id);
    }
    let (status, value) = call(router, "POST", "/dialogue/turn", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{value}");
    value
}

fn gesture(kind: &str, target: &str) -> Value {
    json!([{ "targetKind": kind, "targetId": target, "timestamp": Utc::now() }])
}

async fn lymph_node_region(router: &Router) -> String {
    let (_, annotations) = call(router, "GET", "/annotations?patient=P1001", None).await;
    annotations
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["freeTextValue"] == "splenic lymph node" || a["anatomy"].as_str().is_some_and(|s| s.contains("Lymph")))
        .expect("seeded lymph node annotation")["region"]
        .as_str()
        .unwrap()
        .to_string()
}

#[tokio::test]
async fn seeded_cohort_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let router = router(dir.path());
    let (status, patients) = call(&router, "GET", "/patients", None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = patients.as_array().unwrap().iter().map(|p| p["displayName"].as_str().unwrap()).collect();
    assert!(names.contains(&"Peter Maier"), "{names:?}");
    assert_eq!(names.len(), 4);

    let (status, images) = call(&router, "GET", "/patients/P1001/images", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(images["studies"][0]["series"].as_array().unwrap().len(), 4);

    let (status, findings) = call(&router, "GET", "/patients/P1001/findings", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(findings["reports"][0]["text"].as_str().unwrap().contains("lymphoma"));

    let (status, _) = call(&router, "GET", "/patients/P9999/findings", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn first_turn_opens_patient_search() {
    let dir = tempfile::tempdir().unwrap();
    let router = router(dir.path());
    let response = turn(&router, None, "Show me my patient records, lymphoma cases, for this week.", json!([])).await;
    assert!(response["sessionId"].as_str().is_some_and(|s| !s.is_empty()));
    assert_eq!(response["intent"], "ShowRecords");
    assert_eq!(response["directives"][0]["action"], "open");
    assert_eq!(response["directives"][0]["panel"], "PatientSearch");
    assert_eq!(response["directives"][0]["payload"][0]["iri"], "urn:medico:patient:P1001");
}

#[tokio::test]
async fn empty_turn_asks_for_clarification() {
    let dir = tempfile::tempdir().unwrap();
    let router = router(dir.path());
    let response = turn(&router, None, "", json!([])).await;
    assert_eq!(response["intent"], "Clarify");
    assert!(response["directives"].as_array().unwrap().is_empty());
    assert!(!response["speakText"].as_str().unwrap().is_empty());
}

#[tokio::test]
async fn gesture_only_turn_selects_the_region() {
    let dir = tempfile::tempdir().unwrap();
    let router = router(dir.path());
    let region = lymph_node_region(&router).await;
    let response = turn(&router, None, "", gesture("region", &region)).await;
    assert_eq!(response["intent"], "SelectRegion");
    assert_eq!(response["referents"]["region"], region);
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let router = router(dir.path());
    let request = Request::builder()
        .method("POST")
        .uri("/dialogue/turn")
        .body(Body::from("{\"text\": "))
        .unwrap();
    let response = router.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&response.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["error"], "invalid request body");

    let (status, _) = call(&router, "POST", "/dialogue/turn", Some(json!({ "text": "hi", "colour": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&router, "GET", "/search?terms=nonsense", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["detail"]["unknown"][0], "nonsense");
    let (status, _) = call(&router, "GET", "/ontology/urn:fma:Nothing/neighbors", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_keep_separate_focus() {
    let dir = tempfile::tempdir().unwrap();
    let router = router(dir.path());
    let a = turn(&router, Some("a"), "", gesture("patient", "urn:medico:patient:P1002")).await;
    assert_eq!(a["referents"]["patient"], "urn:medico:patient:P1002");
    let a = turn(&router, Some("a"), "Get the findings of this patient", json!([])).await;
    assert_eq!(a["directives"][0]["panel"], "PatientFinding");
    let b = turn(&router, Some("b"), "Get the findings of this patient", json!([])).await;
    assert!(b["directives"].as_array().unwrap().is_empty(), "{b}");
    assert_eq!(b["sessionId"], "b");
}

#[tokio::test]
async fn annotations_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let created = {
        let router = router(dir.path());
        let (status, region) = call(
            &router,
            "POST",
            "/regions",
            Some(json!({ "target": "urn:medico:image:1.2.999.1.1.2.1", "geometry": "rect:10,10,20,20" })),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED, "{region}");
        let (status, created) = call(
            &router,
            "POST",
            "/annotations",
            Some(json!({ "region": region["id"], "anatomy": "urn:fma:Liver", "user": "dr.test" })),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED, "{created}");
        assert!(created["confirmation"].as_str().unwrap().contains("liver"));
        let (status, _) = call(
            &router,
            "POST",
            "/annotations",
            Some(json!({ "region": region["id"], "confidence": 2.0, "anatomy": "urn:fma:Liver" })),
        )
        .await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        created["annotation"]["id"].clone()
    };
    let router = router(dir.path());
    let (_, listed) = call(&router, "GET", "/annotations?patient=P1001", None).await;
    assert!(listed.as_array().unwrap().iter().any(|a| a["id"] == created), "{listed}");
    let (_, patients) = call(&router, "GET", "/patients", None).await;
    assert_eq!(patients.as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn event_stream_carries_directives() {
    let dir = tempfile::tempdir().unwrap();
    let router = router(dir.path());
    turn(&router, Some("watch"), "", json!([])).await;
    let request = Request::builder().uri("/events/watch").body(Body::empty()).unwrap();
    let response = router.clone().oneshot(request).await.unwrap();
    assert_eq!(response.headers()["content-type"], "application/x-ndjson");
    let mut body = response.into_body();
    turn(&router, Some("watch"), "Show me my patient records, lymphoma cases, for this week.", json!([])).await;

    let mut lines: Vec<Value> = Vec::new();
    let mut buffer = String::new();
    while !lines.iter().any(|l| l["type"] == "directive") {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
            .await
            .expect("event within timeout")
            .unwrap()
            .unwrap();
        buffer.push_str(std::str::from_utf8(frame.data_ref().unwrap()).unwrap());
        while let Some(end) = buffer.find('\n') {
            lines.push(serde_json::from_str(&buffer[..end]).unwrap());
            buffer.drain(..=end);
        }
    }
    assert_eq!(lines[0]["type"], "connected");
    assert_eq!(lines[1]["type"], "speak", "history replays the earlier turn");
    let directive = lines.iter().find(|l| l["type"] == "directive").unwrap();
    assert_eq!(directive["directive"]["panel"], "PatientSearch");
    let seqs: Vec<u64> = lines[1..].iter().map(|l| l["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]), "{seqs:?}");
}
