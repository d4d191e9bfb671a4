use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::model::*;
use crate::session::{Service, ServiceError};

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match &self.0 {
            ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ServiceError::Finished(_) => (StatusCode::CONFLICT, "session_finished"),
            ServiceError::InvalidRole(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_role"),
            ServiceError::InvalidAction { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_action"),
            ServiceError::NotEnoughScenarios { .. } => (StatusCode::CONFLICT, "not_enough_scenarios"),
            ServiceError::Store(_) | ServiceError::Core(_) | ServiceError::ReplayMismatch(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: code.to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

fn bad_request(rejection: JsonRejection) -> Response {
    let body = ErrorBody {
        schema_version: SCHEMA_VERSION,
        error: "bad_request".into(),
        message: rejection.body_text(),
    };
    (rejection.status(), Json(body)).into_response()
}

type AppState = Arc<Service>;

// Service calls take short std locks and do blocking file appends, so they
// run on the blocking pool.
async fn blocking<T, F>(svc: AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .expect("service task panicked")
        .map_err(ApiError)
}

async fn create_session(
    State(svc): State<AppState>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(r) => return bad_request(r),
    };
    match blocking(svc, move |s| s.create_session(&req.role)).await {
        Ok(created) => (StatusCode::CREATED, Json(created)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn next_item(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Json<NextItemResponse>, ApiError> {
    blocking(svc, move |s| s.next_item(&id)).await.map(Json)
}

async fn submit_action(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(r) => return bad_request(r),
    };
    match blocking(svc, move |s| s.submit_action(&id, req.action)).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn finish_session(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    blocking(svc, move |s| s.finish_session(&id)).await.map(Json)
}

#[derive(Deserialize)]
struct ReportQuery {
    role: Option<String>,
}

async fn comparison(
    State(svc): State<AppState>,
    Query(q): Query<ReportQuery>,
) -> Result<Json<ComparisonReport>, ApiError> {
    let role = match q.role {
        Some(r) => Some(r.parse::<Role>().map_err(|m| ApiError(ServiceError::InvalidRole(m)))?),
        None => None,
    };
    blocking(svc, move |s| s.comparison_report(role)).await.map(Json)
}

/// Routes of the public API; images under `media_dir` are served at
/// `/media`.
pub fn router(service: Arc<Service>, media_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/action", post(submit_action))
        .route("/sessions/{id}/finish", post(finish_session))
        .route("/reports/comparison", get(comparison))
        .with_state(service);
    if let Some(dir) = media_dir {
        app = app.nest_service("/media", ServeDir::new(dir));
    }
    app
}
