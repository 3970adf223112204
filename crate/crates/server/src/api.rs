//! HTTP/JSON routes and the newline-delimited JSON event stream.

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, StreamExt};
use medico_core::annotation::{self, AnnotationError, AnnotationFilter, AnnotationPayload, Geometry, Origin};
use medico_core::dialogue::{display_name, PointingEvent, SystemResponse};
use medico_core::dicom::{self, Keyword};
use medico_core::repository::RepositoryError;
use medico_core::search::{self, DateRange, QueryOptions, SearchError};
use medico_core::{vocab, Iri, Store, Term};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::app::{App, APOLOGY};

pub type Shared = Arc<App>;

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/dialogue/turn", post(dialogue_turn))
        .route("/events/{session_id}", get(events))
        .route("/patients", get(patients))
        .route("/patients/{id}/findings", get(findings))
        .route("/patients/{id}/images", get(images))
        .route("/regions", post(create_region))
        .route("/annotations", post(create_annotation).get(list_annotations))
        .route("/search", get(search_patients))
        .route("/ontology/{iri}/neighbors", get(neighbors))
        .route("/ingest", post(ingest))
        .with_state(app)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            detail: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(detail) = self.detail {
            body["detail"] = detail;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let status = match &e {
            AnnotationError::NotFound { .. } => StatusCode::NOT_FOUND,
            AnnotationError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotationError::Conflict(_) => StatusCode::CONFLICT,
            AnnotationError::Repository(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let mut error = ApiError::bad_request(e.to_string());
        if let SearchError::EmptyQuery { unknown } = &e {
            error.detail = Some(json!({ "unknown": unknown }));
        }
        error
    }
}

impl From<RepositoryError> for ApiError {
    fn from(e: RepositoryError) -> Self {
        let status = match &e {
            RepositoryError::Io { .. } | RepositoryError::Dicom(_) => StatusCode::BAD_REQUEST,
            RepositoryError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

/// JSON body with the parser's diagnostics (field, line, column) on error.
fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        message: "invalid request body".into(),
        detail: Some(json!({ "reason": e.to_string(), "line": e.line(), "column": e.column() })),
    })
}

fn parse_iri(text: &str) -> Result<Iri, ApiError> {
    Iri::new(text).map_err(|e| ApiError::bad_request(e.to_string()))
}

/// A patient given either as IRI or as DICOM patient ID.
fn resolve_patient(store: &Store, id: &str) -> Result<Iri, ApiError> {
    let iri = if id.contains(':') {
        parse_iri(id)?
    } else {
        dicom::patient_iri(id)
    };
    if store.has_type(&iri, &vocab::medico("Patient")) {
        Ok(iri)
    } else {
        Err(ApiError::not_found(format!("unknown patient {id}")))
    }
}

fn iri_objects(store: &Store, subject: &Iri, predicate: &str) -> Vec<Iri> {
    store
        .objects(subject, &vocab::medico(predicate))
        .into_iter()
        .filter_map(|t| t.as_iri().cloned())
        .collect()
}

async fn health(State(app): State<Shared>) -> Json<Value> {
    let repo = app.repo.read().unwrap_or_else(|e| e.into_inner());
    Json(json!({
        "status": "ok",
        "triples": repo.store().len(),
        "concepts": repo.ontology().len(),
        "sessions": app.session_count(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TurnRequest {
    #[serde(default)]
    session_id: Option<String>,
    text: String,
    #[serde(default)]
    pointing: Vec<PointingEvent>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TurnResponse {
    session_id: String,
    #[serde(flatten)]
    response: SystemResponse,
}

async fn dialogue_turn(State(app): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let request: TurnRequest = parse_body(&body)?;
    let session = app.session(request.session_id.as_deref());
    match app.turn(&session, &request.text, request.pointing).await {
        Ok(response) => Ok(Json(TurnResponse {
            session_id: session.id.clone(),
            response,
        })
        .into_response()),
        Err(()) => Ok((
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({
                "sessionId": session.id,
                "speakText": APOLOGY,
                "directives": [],
                "intent": null,
                "referents": {},
            })),
        )
            .into_response()),
    }
}

/// Newline-delimited JSON: a `connected` line, the session's recent
/// history, then live events.
async fn events(State(app): State<Shared>, Path(session_id): Path<String>) -> Response {
    let session = app.session(Some(&session_id));
    let (history, receiver) = session.subscribe();
    let hello = json!({ "type": "connected", "sessionId": session.id, "seq": 0 }).to_string();
    let replay = stream::iter(std::iter::once(hello).chain(history));
    let live = stream::unfold(receiver, |mut rx| async move {
        let line = match rx.recv().await {
            Ok(line) => line,
            Err(RecvError::Lagged(missed)) => json!({ "type": "lagged", "missed": missed }).to_string(),
            Err(RecvError::Closed) => return None,
        };
        Some((line, rx))
    });
    let body = replay.chain(live).map(|line| Ok::<_, Infallible>(format!("{line}\n")));
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(body))
        .expect("valid response")
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct StudySummary {
    iri: Iri,
    date: Option<String>,
    series: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PatientSummary {
    iri: Iri,
    patient_id: Option<String>,
    name: Option<String>,
    display_name: String,
    studies: Vec<StudySummary>,
}

async fn patients(State(app): State<Shared>) -> Json<Vec<PatientSummary>> {
    let repo = app.repo.read().unwrap_or_else(|e| e.into_inner());
    let store = repo.store();
    let mut out: Vec<PatientSummary> = store
        .subjects(&vocab::rdf_type(), &Term::Iri(vocab::medico("Patient")))
        .into_iter()
        .map(|patient| PatientSummary {
            patient_id: store.literal(&patient, &Keyword::PatientId.predicate()),
            name: store.literal(&patient, &Keyword::PatientName.predicate()),
            display_name: display_name(store, &patient),
            studies: iri_objects(store, &patient, "hasStudy")
                .into_iter()
                .map(|study| StudySummary {
                    date: store.literal(&study, &Keyword::StudyDate.predicate()),
                    series: iri_objects(store, &study, "hasSeries").len(),
                    iri: study,
                })
                .collect(),
            iri: patient,
        })
        .collect();
    out.sort_by(|a, b| a.iri.cmp(&b.iri));
    Json(out)
}

async fn findings(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let repo = app.repo.read().unwrap_or_else(|e| e.into_inner());
    let store = repo.store();
    let patient = resolve_patient(store, &id)?;
    let reports: Vec<Value> = iri_objects(store, &patient, "hasStudy")
        .into_iter()
        .filter_map(|study| {
            let text = store.literal(&study, &vocab::medico("reportText"))?;
            Some(json!({
                "study": study,
                "date": store.literal(&study, &Keyword::StudyDate.predicate()),
                "text": text,
            }))
        })
        .collect();
    let annotations = annotation::list_annotations(
        store,
        &AnnotationFilter {
            patient: Some(patient.clone()),
            ..AnnotationFilter::default()
        },
    );
    Ok(Json(json!({
        "patient": patient,
        "displayName": display_name(store, &patient),
        "reports": reports,
        "annotations": annotations,
    })))
}

async fn images(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let repo = app.repo.read().unwrap_or_else(|e| e.into_inner());
    let store = repo.store();
    let patient = resolve_patient(store, &id)?;
    let literal = |s: &Iri, k: Keyword| store.literal(s, &k.predicate());
    let studies: Vec<Value> = iri_objects(store, &patient, "hasStudy")
        .into_iter()
        .map(|study| {
            let series: Vec<Value> = iri_objects(store, &study, "hasSeries")
                .into_iter()
                .map(|series| {
                    let images: Vec<Value> = iri_objects(store, &series, "hasImage")
                        .into_iter()
                        .map(|image| json!({ "iri": image, "regions": annotation::regions_on(store, &image) }))
                        .collect();
                    json!({
                        "iri": series,
                        "description": literal(&series, Keyword::SeriesDescription),
                        "modality": literal(&series, Keyword::Modality),
                        "bodyPart": literal(&series, Keyword::BodyPartExamined),
                        "regions": annotation::regions_on(store, &series),
                        "images": images,
                    })
                })
                .collect();
            json!({
                "iri": study,
                "date": literal(&study, Keyword::StudyDate),
                "series": series,
            })
        })
        .collect();
    Ok(Json(json!({ "patient": patient, "studies": studies })))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RegionRequest {
    target: Iri,
    geometry: Geometry,
}

async fn create_region(State(app): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let request: RegionRequest = parse_body(&body)?;
    let mut repo = app.repo.write().unwrap_or_else(|e| e.into_inner());
    let region = annotation::create_region(&mut repo, &request.target, request.geometry)?;
    Ok((StatusCode::CREATED, Json(region)).into_response())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct AnnotationRequest {
    region: Option<Iri>,
    supersedes: Option<Iri>,
    #[serde(flatten)]
    payload: AnnotationPayload,
}

async fn create_annotation(State(app): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let request: AnnotationRequest = parse_body(&body)?;
    let mut repo = app.repo.write().unwrap_or_else(|e| e.into_inner());
    let created = match (&request.supersedes, &request.region) {
        (Some(old), _) => annotation::supersede(&mut repo, old, &request.payload)?,
        (None, Some(region)) => annotation::annotate(&mut repo, region, &request.payload)?.0,
        (None, None) => return Err(ApiError::bad_request("either region or supersedes is required")),
    };
    let confirmation = annotation::confirmation_text(repo.store(), repo.ontology(), &created);
    Ok((
        StatusCode::CREATED,
        Json(json!({ "annotation": created, "confirmation": confirmation })),
    )
        .into_response())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct AnnotationQuery {
    patient: Option<String>,
    study: Option<String>,
    region: Option<String>,
    origin: Option<Origin>,
    #[serde(default)]
    include_superseded: bool,
}

async fn list_annotations(
    State(app): State<Shared>,
    Query(query): Query<AnnotationQuery>,
) -> Result<Json<Vec<annotation::ImageAnnotation>>, ApiError> {
    let repo = app.repo.read().unwrap_or_else(|e| e.into_inner());
    let store = repo.store();
    let filter = AnnotationFilter {
        patient: query.patient.as_deref().map(|p| resolve_patient(store, p)).transpose()?,
        study: query.study.as_deref().map(parse_iri).transpose()?,
        region: query.region.as_deref().map(parse_iri).transpose()?,
        origin: query.origin,
        include_superseded: query.include_superseded,
    };
    Ok(Json(annotation::list_annotations(store, &filter)))
}

#[derive(Deserialize)]
struct SearchRequest {
    #[serde(default)]
    terms: String,
    from: Option<String>,
    to: Option<String>,
    patient: Option<String>,
}

async fn search_patients(
    State(app): State<Shared>,
    Query(request): Query<SearchRequest>,
) -> Result<Json<Value>, ApiError> {
    let repo = app.repo.read().unwrap_or_else(|e| e.into_inner());
    let store = repo.store();
    let terms: Vec<&str> = request.terms.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    let date_range = match (request.from.as_deref(), request.to.as_deref()) {
        (None, None) => None,
        (from, to) => Some(DateRange::new(from.unwrap_or("00010101"), to.unwrap_or("99991231"))?),
    };
    let options = QueryOptions {
        patient_scope: request.patient.as_deref().map(|p| resolve_patient(store, p)).transpose()?,
        date_range,
        exclude_region: None,
    };
    let (query, unknown) = search::build_query(repo.ontology(), &terms, options)?;
    let results = search::semantic_search(store, repo.ontology(), &query, app.rank_params())?;
    let results: Vec<Value> = results
        .into_iter()
        .map(|r| {
            let mut value = serde_json::to_value(&r).expect("results serialize");
            value["displayName"] = json!(display_name(store, &r.patient));
            value
        })
        .collect();
    Ok(Json(json!({ "query": query, "unknown": unknown, "results": results })))
}

async fn neighbors(State(app): State<Shared>, Path(iri): Path<String>) -> Result<Json<Value>, ApiError> {
    let repo = app.repo.read().unwrap_or_else(|e| e.into_inner());
    let iri = parse_iri(&iri)?;
    let neighbors = repo
        .ontology()
        .neighbors(&iri)
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    Ok(Json(serde_json::to_value(neighbors).expect("neighbors serialize")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestRequest {
    path: PathBuf,
}

async fn ingest(State(app): State<Shared>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let request: IngestRequest = parse_body(&body)?;
    if !request.path.is_dir() {
        return Err(ApiError::bad_request(format!("{} is not a directory", request.path.display())));
    }
    let mut repo = app.repo.write().unwrap_or_else(|e| e.into_inner());
    let report = repo.ingest_directory(&request.path)?;
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}
