//! HTTP routes. Every error body is `{"error": string, "detail"?: object}`.

use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query as UrlQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use infotriage_core::classify::{Capability, StanceLabel};
use infotriage_core::corpus::{CorpusError, Format};
use infotriage_core::evaluate::GoldRelevance;
use infotriage_core::query::{FeedbackMark, Query, SearchSession};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::app::{App, AppError};
use crate::store::{SearchStatus, StoreError, StoredSearch};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: String,
    detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError {
            status,
            error: error.into(),
            detail: None,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.error });
        if let Some(detail) = self.detail {
            body["detail"] = detail;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        let msg = e.to_string();
        match e {
            AppError::UnknownCorpus(_) | AppError::UnknownBackend(_) | AppError::UnknownDocument(..) => {
                ApiError::new(StatusCode::NOT_FOUND, msg)
            }
            AppError::InvalidQuery(_) | AppError::InvalidGold(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg),
            AppError::NotDone { status, .. } => {
                ApiError::new(StatusCode::CONFLICT, msg).with_detail(json!({ "status": status }))
            }
            AppError::GoldCoverage(missing) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg).with_detail(json!({ "missing": missing }))
            }
            AppError::Store(e) => e.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::UnknownSession(_) | StoreError::UnknownSearch(_) => ApiError::new(StatusCode::NOT_FOUND, msg),
            StoreError::Corpus(CorpusError::MalformedRecord { line, .. }) => {
                ApiError::new(StatusCode::BAD_REQUEST, msg).with_detail(json!({ "line": line }))
            }
            StoreError::Corpus(CorpusError::DuplicateId(id)) => {
                ApiError::new(StatusCode::BAD_REQUEST, msg).with_detail(json!({ "doc_id": id }))
            }
            StoreError::Corpus(_) => ApiError::new(StatusCode::BAD_REQUEST, msg),
            _ => {
                tracing::error!(error = %msg, "store failure");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, msg)
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("body is not JSON: {e}")))?;
    serde_json::from_value(value).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/corpora", post(create_corpus))
        .route("/corpora/{id}", get(get_corpus))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/searches", post(create_search))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/searches/{id}", get(get_search))
        .route("/searches/{id}/results", get(get_results))
        .route("/searches/{id}/metrics", post(post_metrics))
        .route("/backends", get(list_backends))
        .layer(DefaultBodyLimit::disable())
        .with_state(app)
}

#[derive(Deserialize)]
struct FormatParam {
    format: Option<String>,
}

async fn create_corpus(
    State(app): State<Arc<App>>,
    UrlQuery(params): UrlQuery<FormatParam>,
    headers: HeaderMap,
    body: Body,
) -> ApiResult<Response> {
    let format = match params.format {
        Some(f) => f.parse::<Format>().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?,
        None => {
            let ct = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
            if ct.starts_with("text/csv") {
                Format::Csv
            } else {
                Format::Jsonl
            }
        }
    };
    let limit = app.max_upload_bytes;
    let bytes = to_bytes(body, limit).await.map_err(|_| {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, format!("upload exceeds {limit} bytes"))
            .with_detail(json!({ "limit": limit }))
    })?;
    let worker = app.clone();
    let (corpus, created) = tokio::task::spawn_blocking(move || worker.store.put_corpus(&bytes, format))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    let body = json!({
        "corpus_id": corpus.corpus_id(),
        "documents": corpus.len(),
        "created_at": corpus.created_at(),
    });
    Ok((status, Json(body)).into_response())
}

async fn get_corpus(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let corpus = app.store.corpus(&id).ok_or(AppError::UnknownCorpus(id))?;
    Ok(Json(json!({
        "corpus_id": corpus.corpus_id(),
        "documents": corpus.len(),
        "created_at": corpus.created_at(),
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    corpus_id: String,
}

fn session_view(app: &App, session: &SearchSession) -> Value {
    let history: Vec<Value> = session
        .history
        .iter()
        .map(|entry| {
            let mut v = serde_json::to_value(entry).expect("history serializes");
            if let Some(id) = &entry.search_id {
                if let Ok(status) = app.store.with_search(id, |s| s.status) {
                    v["status"] = json!(status);
                }
            }
            v["feedback_precision"] = json!(session.feedback_precision(&entry.result));
            v
        })
        .collect();
    json!({
        "session_id": session.session_id,
        "corpus_id": session.corpus_id,
        "history": history,
        "feedback": session.feedback,
    })
}

async fn create_session(State(app): State<Arc<App>>, body: Bytes) -> ApiResult<Response> {
    let req: NewSession = parse_body(&body)?;
    if app.store.corpus(&req.corpus_id).is_none() {
        return Err(AppError::UnknownCorpus(req.corpus_id).into());
    }
    let session = app.store.create_session(&req.corpus_id)?;
    Ok((StatusCode::CREATED, Json(session_view(&app, &session))).into_response())
}

async fn get_session(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = app.store.session(&id)?;
    Ok(Json(session_view(&app, &session)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSearch {
    query: Value,
    #[serde(default = "default_backend")]
    backend: String,
    #[serde(default)]
    corpus_id: Option<String>,
}

fn default_backend() -> String {
    "lexicon".into()
}

fn search_view(s: &StoredSearch) -> Value {
    let mut v = json!({
        "search_id": s.search_id,
        "session_id": s.session_id,
        "corpus_id": s.corpus_id,
        "backend": s.backend,
        "query": s.query,
        "status": s.status,
        "created_at": s.created_at,
    });
    if let Some(e) = &s.error {
        v["error"] = json!(e);
    }
    if let Some(t) = s.finished_at {
        v["finished_at"] = json!(t);
    }
    if let Some(r) = &s.result {
        v["result_count"] = json!(r.doc_ids.len());
        v["skipped"] = json!(r.skipped);
        v["classifier_calls"] = json!(r.classifier_calls);
    }
    if let Some(m) = &s.metrics {
        v["metrics"] = json!(m);
    }
    v
}

async fn create_search(
    State(app): State<Arc<App>>,
    Path(session_id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: NewSearch = parse_body(&body)?;
    // Unknown session, corpus or backend is a 404 even if the query is also bad.
    let session = app.store.session(&session_id)?;
    let corpus_id = req.corpus_id.clone().unwrap_or(session.corpus_id);
    if app.store.corpus(&corpus_id).is_none() {
        return Err(AppError::UnknownCorpus(corpus_id).into());
    }
    app.backend(&req.backend)?;
    let query = Query::from_json(&req.query.to_string())
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let search = app.enqueue(&session_id, Some(&corpus_id), &req.backend, query)?;
    Ok((StatusCode::ACCEPTED, Json(search_view(&search))).into_response())
}

async fn get_search(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(app.store.with_search(&id, search_view)?))
}

#[derive(Deserialize)]
struct Page {
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    100
}

const MAX_PAGE: usize = 1000;

async fn get_results(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    UrlQuery(page): UrlQuery<Page>,
) -> ApiResult<Json<Value>> {
    let limit = page.limit.min(MAX_PAGE);
    let (status, corpus_id, slice) = app.store.with_search(&id, |s| {
        let slice = s.result.as_ref().map(|r| {
            let end = (page.offset + limit).min(r.doc_ids.len());
            let start = page.offset.min(end);
            (r.doc_ids.len(), r.rationales[start..end].to_vec())
        });
        (s.status, s.corpus_id.clone(), slice)
    })?;
    let Some((total, rationales)) = slice.filter(|_| status == SearchStatus::Done) else {
        return Err(AppError::NotDone { id, status }.into());
    };
    let corpus = app.store.corpus(&corpus_id).ok_or(AppError::UnknownCorpus(corpus_id))?;
    let items: Vec<Value> = rationales
        .into_iter()
        .map(|r| {
            let text = corpus.get(&r.doc_id).map(|d| d.text().to_string());
            json!({ "doc_id": r.doc_id, "text": text, "rationale": r })
        })
        .collect();
    Ok(Json(json!({
        "search_id": id,
        "total": total,
        "offset": page.offset,
        "limit": limit,
        "items": items,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    doc_id: String,
    mark: String,
}

async fn post_feedback(
    State(app): State<Arc<App>>,
    Path(session_id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: FeedbackRequest = parse_body(&body)?;
    let mark = match req.mark.as_str() {
        "relevant" => Some(FeedbackMark::Relevant),
        "irrelevant" => Some(FeedbackMark::Irrelevant),
        "clear" => None,
        other => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("mark must be relevant, irrelevant or clear, not {other:?}"),
            ))
        }
    };
    let session = app.feedback(&session_id, &req.doc_id, mark)?;
    Ok(Json(session_view(&app, &session)))
}

/// Gold labels inline as `{"doc_id": bool}` or as JSON-lines text in the
/// file format the CLI reads.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsRequest {
    #[serde(default)]
    gold: Option<GoldRelevance>,
    #[serde(default)]
    gold_jsonl: Option<String>,
    #[serde(default)]
    stance_target: Option<StanceLabel>,
}

async fn post_metrics(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: MetricsRequest = parse_body(&body)?;
    let gold = match (req.gold, req.gold_jsonl) {
        (Some(g), None) => g,
        (None, Some(text)) => GoldRelevance::from_jsonl(&text, req.stance_target)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?,
        _ => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "give exactly one of \"gold\" or \"gold_jsonl\"",
            ))
        }
    };
    let app2 = app.clone();
    let id2 = id.clone();
    let stored = tokio::task::spawn_blocking(move || app2.metrics(&id2, &gold))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(json!({
        "search_id": id,
        "precision": stored.metrics.precision,
        "recall": stored.metrics.recall,
        "f1": stored.metrics.f1,
        "counts": stored.counts,
    })))
}

async fn list_backends(State(app): State<Arc<App>>) -> Json<Value> {
    let list: Vec<Value> = app
        .backends
        .iter()
        .map(|(name, b)| {
            let caps: Vec<Capability> = b.backend.capabilities().list();
            json!({ "name": name, "kind": b.spec.kind(), "capabilities": caps })
        })
        .collect();
    Json(json!(list))
}
