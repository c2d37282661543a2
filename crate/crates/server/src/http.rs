//! Read-only HTTP API: `GET /api/search` and `GET /api/health`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::service::{SearchService, ServiceError, DEFAULT_K};

/// Allows GET from `origins`, or from any origin when the list is empty.
pub fn cors_layer(origins: &[String]) -> Result<CorsLayer, String> {
    let allow = if origins.is_empty() {
        AllowOrigin::any()
    } else {
        let values = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| format!("invalid CORS origin {o:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(values)
    };
    Ok(CorsLayer::new().allow_methods([Method::GET]).allow_origin(allow))
}

pub fn router(service: Arc<SearchService>, cors: CorsLayer) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/search", get(search))
        .layer(cors)
        .with_state(service)
}

pub async fn serve(service: Arc<SearchService>, bind: SocketAddr, cors: CorsLayer) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service, cors))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn search(State(service): State<Arc<SearchService>>, Query(params): Query<HashMap<String, String>>) -> Response {
    let Some(q) = params.get("q").cloned() else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter q");
    };
    let k = match params.get("k") {
        None => DEFAULT_K,
        Some(raw) => match raw.trim().parse::<usize>() {
            Ok(k) => k,
            Err(_) => return error(StatusCode::BAD_REQUEST, format!("k must be an integer, got {raw:?}")),
        },
    };
    let outcome = tokio::task::spawn_blocking(move || service.search(&q, k)).await;
    match outcome {
        Ok(Ok(body)) => Json(body).into_response(),
        Ok(Err(e)) if e.is_client_error() => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => internal(&e),
        Err(join) => {
            log::error!("search task failed: {join}");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
        }
    }
}

fn internal(e: &ServiceError) -> Response {
    log::error!("search failed: {e}");
    error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
}
