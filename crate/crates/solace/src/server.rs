//! HTTP JSON API.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::service::{ChatService, ServiceError};

#[derive(Deserialize)]
struct MessageRequest {
    #[serde(default)]
    session_id: Option<String>,
    text: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        match self {
            ServiceError::BadRequest(m) => (StatusCode::BAD_REQUEST, Json(json!({ "error": m }))).into_response(),
            ServiceError::NotFound(m) => (StatusCode::NOT_FOUND, Json(json!({ "error": m }))).into_response(),
            ServiceError::Internal { message, reply } => (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(json!({ "error": message, "reply": reply })),
            )
                .into_response(),
        }
    }
}

async fn blocking<T, F>(svc: Arc<ChatService>, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&ChatService) -> Result<T, ServiceError> + Send + 'static,
{
    let fallback = svc.engine().fallback.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .unwrap_or_else(|e| {
            Err(ServiceError::Internal {
                message: format!("request handler failed: {e}"),
                reply: fallback,
            })
        })
}

async fn create_session(State(svc): State<Arc<ChatService>>) -> Result<Json<serde_json::Value>, ServiceError> {
    let id = blocking(svc, |s| Ok(s.create_session())).await?;
    Ok(Json(json!({ "session_id": id })))
}

async fn message(State(svc): State<Arc<ChatService>>, body: Bytes) -> Result<Response, ServiceError> {
    let req: MessageRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::BadRequest(format!("malformed request body: {e}")))?;
    let resp = blocking(svc, move |s| s.handle_message(req.session_id.as_deref(), &req.text)).await?;
    Ok(Json(resp).into_response())
}

async fn history(State(svc): State<Arc<ChatService>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let turns = blocking(svc, move |s| s.history(&id).map(|t| (id, t))).await?;
    Ok(Json(json!({ "session_id": turns.0, "turns": turns.1 })).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(svc: Arc<ChatService>) -> Router {
    Router::new()
        .route("/api/session", post(create_session))
        .route("/api/message", post(message))
        .route("/api/session/{id}/history", get(history))
        .route("/healthz", get(healthz))
        .with_state(svc)
}

/// Binds `addr` and serves until the future resolves; returns the bound
/// address through `on_bound` (useful with port 0).
pub async fn serve(
    svc: Arc<ChatService>,
    addr: &str,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown).await
}
