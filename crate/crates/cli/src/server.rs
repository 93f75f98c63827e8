use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pragma_core::harness::session::{SessionError, SessionStore, Step, REFERENCE_SYSTEM};
use pragma_core::Domain;
use serde::Deserialize;
use serde_json::{json, Value};

struct ApiError(SessionError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Finished(_) => StatusCode::CONFLICT,
            SessionError::InvalidAction(_) | SessionError::BadRequest(_) => StatusCode::BAD_REQUEST,
            SessionError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

#[derive(Deserialize)]
struct CreateRequest {
    domain: Domain,
    system: Option<String>,
}

#[derive(Deserialize)]
struct ActionRequest {
    action: Value,
}

async fn create(State(store): State<Arc<SessionStore>>, Json(req): Json<CreateRequest>) -> ApiResult {
    let system = req.system.as_deref().unwrap_or(REFERENCE_SYSTEM);
    store.create(req.domain, system).map(Json).map_err(ApiError)
}

async fn view(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult {
    store.view(&id).map(Json).map_err(ApiError)
}

async fn act(State(store): State<Arc<SessionStore>>, Path(id): Path<String>, Json(req): Json<ActionRequest>) -> ApiResult {
    let step = Step::from_json(&req.action).map_err(ApiError)?;
    store.act(&id, step).map(Json).map_err(ApiError)
}

async fn finish(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult {
    store.finish(&id).map(Json).map_err(ApiError)
}

async fn results(State(store): State<Arc<SessionStore>>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], store.results_jsonl()).into_response()
}

async fn systems(State(store): State<Arc<SessionStore>>) -> Json<Value> {
    Json(json!({ "systems": store.systems() }))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(view))
        .route("/sessions/{id}/actions", post(act))
        .route("/sessions/{id}/finish", post(finish))
        .route("/results", get(results))
        .route("/systems", get(systems))
        .with_state(store)
}
